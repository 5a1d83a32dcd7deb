use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::Ncwno;
use crate::tensor::{Element, Tensor};

/// Frozen copy of the gating and label-encoder parameters, by name.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSnapshot<T> {
    entries: Vec<(String, Arc<Tensor<T>>)>,
}

impl<T: Element> GateSnapshot<T> {
    /// Captures the model's current gating parameters.
    pub fn capture(model: &Ncwno<T>) -> Self {
        Self {
            entries: model
                .params()
                .iter()
                .filter(|p| p.group.is_gating())
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub(crate) fn from_entries(entries: Vec<(String, Arc<Tensor<T>>)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, Arc<Tensor<T>>)] {
        &self.entries
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Per-task gate snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMemory<T> {
    slots: BTreeMap<usize, GateSnapshot<T>>,
}

impl<T> Default for SemanticMemory<T> {
    fn default() -> Self {
        Self {
            slots: BTreeMap::new(),
        }
    }
}

impl<T: Element> SemanticMemory<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `snapshot` under `label`. Returns the snapshot it replaced.
    pub fn store(&mut self, label: usize, snapshot: GateSnapshot<T>) -> Option<GateSnapshot<T>> {
        self.slots.insert(label, snapshot)
    }

    pub fn get(&self, label: usize) -> Option<&GateSnapshot<T>> {
        self.slots.get(&label)
    }

    pub fn contains(&self, label: usize) -> bool {
        self.slots.contains_key(&label)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.slots.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Loads the gate snapshot for `label` into `model`. On error the model is
/// left untouched.
pub fn activate_task<T: Element>(
    model: &mut Ncwno<T>,
    memory: &SemanticMemory<T>,
    label: usize,
) -> Result<()> {
    let snap = memory.get(label).ok_or(Error::UnknownTask(label))?;
    for (name, value) in snap.entries() {
        match model.param(name) {
            Some(p) if p.shape() == value.shape() => {}
            _ => {
                return Err(Error::Shape(format!(
                    "snapshot entry {name} does not fit the model"
                )))
            }
        }
    }
    for (name, value) in snap.entries() {
        model.set_param_shared(name, value.clone())?;
    }
    Ok(())
}
