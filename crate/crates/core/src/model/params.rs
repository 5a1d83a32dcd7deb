use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Element, Tensor};

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Lift,
    Expert,
    Skip,
    Projection,
    Gate,
    Encoder,
}

impl ParamGroup {
    /// Gate networks and the label encoder: the parameters tuned during transfer.
    pub fn is_gating(self) -> bool {
        matches!(self, ParamGroup::Gate | ParamGroup::Encoder)
    }
}

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub group: ParamGroup,
    pub value: Arc<Tensor<T>>,
    pub trainable: bool,
}

pub(crate) enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    Fan(usize),
    /// `U(0, 1) * scale`.
    Unit(f64),
}

pub(crate) struct ParamBuilder<T> {
    rng: ChaCha8Rng,
    pub(crate) params: Vec<Parameter<T>>,
}

impl<T: Element> ParamBuilder<T> {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
        }
    }

    pub(crate) fn add(
        &mut self,
        name: String,
        group: ParamGroup,
        shape: &[usize],
        init: Init,
    ) -> usize {
        let rng = &mut self.rng;
        let value = match init {
            Init::Fan(fan) => {
                let bound = 1.0 / (fan.max(1) as f64).sqrt();
                Tensor::from_fn(shape, |_| T::from_f64c(rng.random_range(-bound..bound)))
            }
            Init::Unit(scale) => {
                Tensor::from_fn(shape, |_| T::from_f64c(rng.random::<f64>() * scale))
            }
        };
        self.params.push(Parameter {
            name,
            group,
            value: Arc::new(value),
            trainable: true,
        });
        self.params.len() - 1
    }

    /// Weight `[fan_in, fan_out]` and bias `[fan_out]`.
    pub(crate) fn dense(
        &mut self,
        prefix: &str,
        group: ParamGroup,
        fan_in: usize,
        fan_out: usize,
    ) -> Dense {
        Dense {
            w: self.add(
                format!("{prefix}.w"),
                group,
                &[fan_in, fan_out],
                Init::Fan(fan_in),
            ),
            b: self.add(format!("{prefix}.b"), group, &[fan_out], Init::Fan(fan_in)),
        }
    }

    /// Kernel `[k, k, cin, cout]` and bias `[cout]`.
    pub(crate) fn conv(&mut self, prefix: &str, k: usize, cin: usize, cout: usize) -> Dense {
        let fan = k * k * cin;
        Dense {
            w: self.add(
                format!("{prefix}.w"),
                ParamGroup::Gate,
                &[k, k, cin, cout],
                Init::Fan(fan),
            ),
            b: self.add(
                format!("{prefix}.b"),
                ParamGroup::Gate,
                &[cout],
                Init::Fan(fan),
            ),
        }
    }
}

/// Indices of a weight/bias pair in the parameter list.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub(crate) w: usize,
    pub(crate) b: usize,
}
