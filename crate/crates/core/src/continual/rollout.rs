use rayon::prelude::*;

use super::metrics::{relative_l2, Interval};
use super::train::TaskFrames;
use crate::error::{Error, Result};
use crate::model::Ncwno;
use crate::pde::TaskDataset;
use crate::tensor::{Element, Tensor};

/// Anything that maps a window `[batch, d.., w]` to the next frame `[batch, d.., 1]`.
pub trait OneStepModel<T: Element> {
    fn step(&self, window: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>>;
}

impl<T: Element> OneStepModel<T> for Ncwno<T> {
    fn step(&self, window: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
        self.predict(window, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutSpec {
    pub window: usize,
    pub horizon: usize,
}

impl RolloutSpec {
    pub fn new(window: usize, horizon: usize) -> Result<Self> {
        if window == 0 || horizon == 0 {
            return Err(Error::InvalidArgument(
                "rollout window and horizon must be positive".into(),
            ));
        }
        Ok(Self { window, horizon })
    }
}

/// Autoregressive prediction for a batch: `windows` is `[batch, d.., w]`
/// (frames as channels), the result is `[batch, horizon, d..]`.
pub fn rollout_batch<T: Element, M: OneStepModel<T> + ?Sized>(
    model: &M,
    windows: &Tensor<T>,
    labels: &[usize],
    horizon: usize,
) -> Result<Tensor<T>> {
    let shape = windows.shape().to_vec();
    if shape.len() < 3 {
        return Err(Error::Shape(format!("rollout window {shape:?}")));
    }
    let batch = shape[0];
    let w = shape[shape.len() - 1];
    let spatial = &shape[1..shape.len() - 1];
    let points: usize = spatial.iter().product();
    let mut current = windows.clone();
    let mut out = vec![T::zero(); batch * horizon * points];
    for t in 0..horizon {
        let next = model.step(&current, labels)?;
        let mut expect = shape.clone();
        *expect.last_mut().expect("rank") = 1;
        if next.shape() != expect.as_slice() {
            return Err(Error::Shape(format!(
                "one-step model returned {:?}, expected {expect:?}",
                next.shape()
            )));
        }
        let mut shifted = Vec::with_capacity(current.len());
        for b in 0..batch {
            for p in 0..points {
                let cell = (b * points + p) * w;
                shifted.extend_from_slice(&current.data()[cell + 1..cell + w]);
                let v = next.data()[b * points + p];
                shifted.push(v);
                out[(b * horizon + t) * points + p] = v;
            }
        }
        current = Tensor::new(shape.clone(), shifted)?;
    }
    let mut out_shape = vec![batch, horizon];
    out_shape.extend(spatial);
    Tensor::new(out_shape, out)
}

/// Rolls one trajectory forward from `window` (`[w, d..]`), returning `[T, d..]`.
pub fn rollout<T: Element, M: OneStepModel<T> + ?Sized>(
    model: &M,
    label: usize,
    window: &Tensor<T>,
    spec: RolloutSpec,
) -> Result<Tensor<T>> {
    let shape = window.shape();
    if shape.len() < 2 || shape[0] != spec.window {
        return Err(Error::Shape(format!(
            "window {shape:?} does not hold {} frames",
            spec.window
        )));
    }
    let spatial = shape[1..].to_vec();
    let points: usize = spatial.iter().product();
    let w = spec.window;
    let channels = Tensor::from_fn(&[points * w], |i| window.data()[(i % w) * points + i / w]);
    let mut batched = vec![1];
    batched.extend(&spatial);
    batched.push(w);
    let out = rollout_batch(model, &channels.reshape(&batched)?, &[label], spec.horizon)?;
    let mut result = vec![spec.horizon];
    result.extend(&spatial);
    out.reshape(&result)
}

/// Per-step accuracy of free-running predictions over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReport {
    /// Accuracy interval at each forecast step, 1-based in reports.
    pub per_step: Vec<Interval>,
    /// Accuracy over the whole forecast horizon.
    pub overall: Interval,
}

const EVAL_CHUNK: usize = 10;

/// Rolls every test sample out over the stored horizon using `label`'s
/// current gates. Chunks are evaluated in parallel; results do not depend on
/// the thread count.
pub fn evaluate_rollout<T: Element>(
    model: &Ncwno<T>,
    data: &TaskDataset,
    label: usize,
) -> Result<RolloutReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let horizon = data.horizon();
    let points: usize = data.spatial().iter().product();
    let w = data.window();
    let n = data.len();
    let chunks: Vec<Result<Vec<(Vec<f64>, f64)>>> = (0..n.div_ceil(EVAL_CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(n);
            let bsz = range.len();
            let inputs = &data.inputs.data()[range.start * points * w..range.end * points * w];
            let mut shape = vec![bsz];
            shape.extend(data.spatial());
            shape.push(w);
            let windows = Tensor::new(
                shape,
                inputs.iter().map(|&v| T::from_f64c(v as f64)).collect(),
            )?;
            let pred = rollout_batch(model, &windows, &vec![label; bsz], horizon)?;
            range
                .enumerate()
                .map(|(k, i)| {
                    let truth =
                        &data.outputs.data()[i * horizon * points..(i + 1) * horizon * points];
                    let guess: Vec<f32> = pred.data()
                        [k * horizon * points..(k + 1) * horizon * points]
                        .iter()
                        .map(|v| v.to_f64c() as f32)
                        .collect();
                    let steps = (0..horizon)
                        .map(|t| {
                            let r = t * points..(t + 1) * points;
                            relative_l2(&truth[r.clone()], &guess[r]).map(|e| 1.0 - e)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((steps, 1.0 - relative_l2(truth, &guess)?))
                })
                .collect()
        })
        .collect();
    let mut per_sample = Vec::with_capacity(n);
    for c in chunks {
        per_sample.extend(c?);
    }
    let per_step = (0..horizon)
        .map(|t| Interval::from_samples(&per_sample.iter().map(|(s, _)| s[t]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let overall = Interval::from_samples(&per_sample.iter().map(|(_, o)| *o).collect::<Vec<_>>())?;
    Ok(RolloutReport { per_step, overall })
}

/// Teacher-forced one-step accuracy: every window of every test trajectory
/// predicts its next frame; each sample contributes its mean accuracy.
pub fn evaluate_one_step<T: Element>(
    model: &Ncwno<T>,
    data: &TaskDataset,
    label: usize,
) -> Result<Interval> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let frames = TaskFrames::new(data);
    let w = frames.window;
    let starts = frames.starts();
    let points = frames.points;
    let per_sample = (0..frames.len())
        .into_par_iter()
        .map(|i| {
            let mut input = Vec::with_capacity(starts * points * w);
            for s in 0..starts {
                frames.push_window::<T>(i, s, &mut input);
            }
            let mut shape = vec![starts];
            shape.extend(&frames.spatial);
            shape.push(w);
            let pred = model.predict(&Tensor::new(shape, input)?, &vec![label; starts])?;
            let mut total = 0.0;
            for s in 0..starts {
                let guess: Vec<f32> = pred.data()[s * points..(s + 1) * points]
                    .iter()
                    .map(|v| v.to_f64c() as f32)
                    .collect();
                total += 1.0 - relative_l2(frames.frame(i, s + w), &guess)?;
            }
            Ok(total / starts as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Interval::from_samples(&per_sample)
}
