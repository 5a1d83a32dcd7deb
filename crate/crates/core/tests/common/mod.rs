#![allow(dead_code)]

pub mod gradchecks;
pub mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ncwno::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn positive(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(0.2..1.0))
}

/// Worst relative error, over all inputs, between the tape gradient of
/// `sum(f(inputs) * probe)` and central differences with step `h`.
pub fn gradient_error<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: for<'t> Fn(&[Var<'t, f64>]) -> Var<'t, f64>,
{
    let h = 1e-4;
    let mut r = rng(0x5eed);
    let probe = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let shape = f(&vars).shape();
        random(&shape, &mut r)
    };
    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let y = f(&vars).value();
        y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = f(&vars);
    let loss = y.mul(&tape.constant(probe.clone())).unwrap().sum();
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i]);
        let mut numeric = Tensor::<f64>::zeros(input.shape());
        for k in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= h;
            numeric.data_mut()[k] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic.norm().max(numeric.norm()).max(1e-12);
        worst = worst.max(diff / scale);
    }
    worst
}

/// Three 1D tasks on a 32-point grid: two foundation, one transfer.
pub const TINY: &str = r#"
seed = 3
out = "run"

[model]
grid = [32]
blocks = 1
experts = 2
width = 8
levels = 2
bases = [1, 2]
gate_hidden = [16]
projection_width = 16

[train]
epochs = 2
batch_size = 8
windows_per_sample = 2

[transfer]
epochs = 2
batch_size = 8
windows_per_sample = 2

[[tasks]]
label = 0
name = "nagumo_1d"
samples = 8
test = 3
grid = 32
horizon = 4

[[tasks]]
label = 1
name = "burgers_1d"
samples = 8
test = 3
grid = 32
horizon = 4

[[tasks]]
label = 2
name = "heat_1d"
role = "transfer"
samples = 8
test = 3
grid = 32
horizon = 4
"#;

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}
