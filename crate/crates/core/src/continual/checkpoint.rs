use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::memory::{GateSnapshot, SemanticMemory};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Ncwno};
use crate::tensor::io::{read_tensors, write_tensors};
use crate::tensor::{Element, Tensor};

const FORMAT: &str = "ncwno-checkpoint-v1";
const MANIFEST: &str = "checkpoint.toml";
const MEMORY_PREFIX: &str = "memory.";

/// A trained model together with its semantic memory.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: Ncwno<T>,
    pub memory: SemanticMemory<T>,
    /// Task names by label, for reports.
    pub tasks: BTreeMap<usize, String>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    dtype: String,
    /// Hex, since TOML integers are signed.
    seed: String,
    memory_labels: Vec<usize>,
    tasks: BTreeMap<String, String>,
    model: ModelConfig,
}

fn is_blob(name: &str) -> bool {
    name.len() == 9
        && name.starts_with('t')
        && name.ends_with(".bin")
        && name[1..5].bytes().all(|b| b.is_ascii_digit())
}

pub fn save_checkpoint<T: Element>(dir: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_name().to_str().is_some_and(is_blob) {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    let mut named: Vec<(String, &Tensor<T>)> = ckpt
        .model
        .params()
        .iter()
        .map(|p| (p.name.clone(), &*p.value))
        .collect();
    for label in ckpt.memory.labels() {
        let snap = ckpt.memory.get(label).expect("listed label");
        for (name, t) in snap.entries() {
            named.push((format!("{MEMORY_PREFIX}{label}.{name}"), &**t));
        }
    }
    write_tensors(dir, &named)?;
    let manifest = Manifest {
        format: FORMAT.into(),
        dtype: T::DTYPE.as_str().into(),
        seed: format!("{:016x}", ckpt.seed),
        memory_labels: ckpt.memory.labels(),
        tasks: ckpt
            .tasks
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
        model: ckpt.model.config().clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a checkpoint without modifying anything on disk.
pub fn load_checkpoint<T: Element>(dir: &Path) -> Result<Checkpoint<T>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.format != FORMAT {
        return Err(Error::Format(format!(
            "unsupported checkpoint format {:?}",
            m.format
        )));
    }
    let seed = u64::from_str_radix(&m.seed, 16)
        .map_err(|_| Error::Format(format!("seed {:?}", m.seed)))?;
    let mut model = Ncwno::<T>::new(m.model, seed)?;
    let mut seen = 0;
    let mut slots: BTreeMap<usize, Vec<(String, Arc<Tensor<T>>)>> = BTreeMap::new();
    for (name, t) in read_tensors::<T>(dir)? {
        if let Some(rest) = name.strip_prefix(MEMORY_PREFIX) {
            let (label, pname) = rest
                .split_once('.')
                .and_then(|(l, p)| Some((l.parse::<usize>().ok()?, p)))
                .ok_or_else(|| Error::Format(format!("memory tensor name {name:?}")))?;
            match model.param(pname) {
                Some(p) if p.shape() == t.shape() => {}
                _ => {
                    return Err(Error::Format(format!(
                        "memory tensor {name} does not fit the model"
                    )))
                }
            }
            slots
                .entry(label)
                .or_default()
                .push((pname.to_string(), Arc::new(t)));
        } else {
            model
                .set_param(&name, t)
                .map_err(|e| Error::Format(format!("{name}: {e}")))?;
            seen += 1;
        }
    }
    if seen != model.params().len() {
        return Err(Error::Format(format!(
            "checkpoint holds {seen} of {} model parameters",
            model.params().len()
        )));
    }
    if slots.keys().copied().collect::<Vec<_>>() != m.memory_labels {
        return Err(Error::Format(
            "memory labels do not match stored snapshots".into(),
        ));
    }
    let mut memory = SemanticMemory::new();
    for (label, entries) in slots {
        memory.store(label, GateSnapshot::from_entries(entries));
    }
    let mut tasks = BTreeMap::new();
    for (k, v) in m.tasks {
        let label = k
            .parse()
            .map_err(|_| Error::Format(format!("task label {k:?}")))?;
        tasks.insert(label, v);
    }
    Ok(Checkpoint {
        model,
        memory,
        tasks,
        seed,
    })
}
