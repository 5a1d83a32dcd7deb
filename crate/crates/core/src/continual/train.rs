use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memory::{GateSnapshot, SemanticMemory};
use crate::error::{Error, Result};
use crate::model::{Ncwno, ParamGroup};
use crate::pde::TaskDataset;
use crate::tensor::optim::{clip_grad_norm, step_lr_schedule, Adam, AdamConfig};
use crate::tensor::{Element, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Per-sample relative L2 error, averaged over the batch.
    #[default]
    RelativeL2,
    /// Mean squared error over all entries.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Foundation,
    Transfer,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Foundation => "foundation",
            Phase::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Learning rate is multiplied by `gamma` every `step_size` epochs.
    pub step_size: usize,
    pub gamma: f64,
    pub loss: LossKind,
    pub seed: u64,
    /// Training windows drawn per trajectory each epoch; all of them when unset.
    pub windows_per_sample: Option<usize>,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 20,
            lr: 1e-3,
            weight_decay: 1e-6,
            step_size: 20,
            gamma: 0.5,
            loss: LossKind::RelativeL2,
            seed: 0,
            windows_per_sample: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// Defaults for a transfer phase: same optimizer, 50 epochs.
    pub fn transfer() -> Self {
        Self {
            epochs: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Config(
                "lr and gamma must be positive, weight_decay non-negative".into(),
            ));
        }
        if self.step_size == 0 {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if self.windows_per_sample == Some(0) {
            return Err(Error::Config("windows_per_sample must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One line of the run log: mean training loss of one task over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    pub task: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u128,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch,phase,task,loss,lr,wall_ms";
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{:.8e},{:e},{}",
            self.epoch,
            self.phase.as_str(),
            self.task,
            self.loss,
            self.lr,
            self.wall_ms
        )
    }
}

/// Trajectories of one task flattened per sample as `[frames, points]`.
pub(crate) struct TaskFrames {
    pub label: usize,
    pub window: usize,
    pub frames: usize,
    pub points: usize,
    pub spatial: Vec<usize>,
    samples: Vec<Vec<f32>>,
}

impl TaskFrames {
    pub fn new(data: &TaskDataset) -> Self {
        let spatial = data.spatial().to_vec();
        let points = spatial.iter().product();
        let samples: Vec<Vec<f32>> = (0..data.len())
            .map(|i| {
                data.frames(i)
                    .iter()
                    .flat_map(|f| f.data().iter().copied())
                    .collect()
            })
            .collect();
        Self {
            label: data.label,
            window: data.window(),
            frames: data.window() + data.horizon(),
            points,
            spatial,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Valid window starts per sample.
    pub fn starts(&self) -> usize {
        self.frames - self.window
    }

    pub fn frame(&self, sample: usize, f: usize) -> &[f32] {
        &self.samples[sample][f * self.points..(f + 1) * self.points]
    }

    /// Input channels `[d.., w]` for the window starting at `start`, appended to `out`.
    pub fn push_window<T: Element>(&self, sample: usize, start: usize, out: &mut Vec<T>) {
        let s = &self.samples[sample];
        for p in 0..self.points {
            for f in 0..self.window {
                out.push(T::from_f64c(s[(start + f) * self.points + p] as f64));
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Pair {
    task: usize,
    sample: usize,
    start: usize,
}

fn epoch_pairs(tasks: &[TaskFrames], per_sample: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let mut pairs = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        let n = task.starts();
        for sample in 0..task.len() {
            match per_sample {
                Some(k) if k < n => {
                    for start in rand::seq::index::sample(rng, n, k) {
                        pairs.push(Pair {
                            task: t,
                            sample,
                            start,
                        });
                    }
                }
                _ => pairs.extend((0..n).map(|start| Pair {
                    task: t,
                    sample,
                    start,
                })),
            }
        }
    }
    pairs.shuffle(rng);
    pairs
}

fn check_tasks<T: Element>(model: &Ncwno<T>, tasks: &[TaskFrames]) -> Result<()> {
    if tasks.is_empty() || tasks.iter().all(|t| t.len() == 0) {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let c = model.config();
    if c.out_channels != 1 {
        return Err(Error::InvalidArgument(
            "training expects one output channel".into(),
        ));
    }
    for t in tasks {
        if t.spatial != c.grid {
            return Err(Error::Shape(format!(
                "task {} grid {:?} does not match model grid {:?}",
                t.label, t.spatial, c.grid
            )));
        }
        if t.window != c.in_channels {
            return Err(Error::Shape(format!(
                "task {} has {} input frames, model expects {}",
                t.label, t.window, c.in_channels
            )));
        }
        if t.label >= c.max_tasks {
            return Err(Error::LabelOutOfRange {
                label: t.label,
                max: c.max_tasks,
            });
        }
    }
    Ok(())
}

/// Runs `cfg.epochs` of Adam over the shuffled union of all task windows,
/// updating only the parameters currently marked trainable.
fn fit<T: Element>(
    model: &mut Ncwno<T>,
    tasks: &[TaskFrames],
    cfg: &TrainConfig,
    phase: Phase,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    check_tasks(model, tasks)?;
    let shapes: Vec<Vec<usize>> = model
        .params()
        .iter()
        .filter(|p| p.trainable)
        .map(|p| p.value.shape().to_vec())
        .collect();
    let mut adam = Adam::<T>::new(
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        &shapes,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grid = model.config().grid.clone();
    let points: usize = grid.iter().product();
    let w = model.config().in_channels;
    let mut logs = Vec::new();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = step_lr_schedule(epoch, cfg.lr, cfg.step_size, cfg.gamma);
        adam.set_lr(lr);
        let pairs = epoch_pairs(tasks, cfg.windows_per_sample, &mut rng);
        let mut sums = vec![(0.0f64, 0usize); tasks.len()];

        for (b, chunk) in pairs.chunks(cfg.batch_size).enumerate() {
            let bsz = chunk.len();
            let mut input = Vec::with_capacity(bsz * points * w);
            let mut target = Vec::with_capacity(bsz * points);
            let mut labels = Vec::with_capacity(bsz);
            for pair in chunk {
                let task = &tasks[pair.task];
                task.push_window(pair.sample, pair.start, &mut input);
                target.extend(
                    task.frame(pair.sample, pair.start + w)
                        .iter()
                        .map(|&v| T::from_f64c(v as f64)),
                );
                labels.push(task.label);
            }
            let mut shape = vec![bsz];
            shape.extend(&grid);
            shape.push(w);
            let input = Tensor::new(shape.clone(), input)?;
            *shape.last_mut().expect("rank") = 1;
            let target = Arc::new(Tensor::new(shape, target)?);

            // the tape must be dropped before the update so parameters are not shared
            let mut grads = {
                let tape = Tape::new();
                let bound = model.bind(&tape);
                let pred = model.forward(&bound, &input, &labels)?;
                let loss = match cfg.loss {
                    LossKind::RelativeL2 => pred.relative_l2_loss(target.clone())?,
                    LossKind::Mse => {
                        let d = pred.sub(&tape.constant(target.clone()))?;
                        d.mul(&d)?
                            .sum()
                            .scale(T::from_f64c(1.0 / target.len() as f64))
                    }
                };
                let value = loss.value().data()[0].to_f64c();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "{} loss at epoch {epoch}, batch {b} (labels {labels:?}, lr {lr:e})",
                        phase.as_str()
                    )));
                }
                {
                    let pv = pred.value();
                    for (k, pair) in chunk.iter().enumerate() {
                        let range = k * points..(k + 1) * points;
                        let (mut num, mut den) = (0.0, 0.0);
                        for (p, t) in pv.data()[range.clone()].iter().zip(&target.data()[range]) {
                            let (p, t) = (p.to_f64c(), t.to_f64c());
                            num += (p - t) * (p - t);
                            den += t * t;
                        }
                        let e = if den > 0.0 {
                            (num / den).sqrt()
                        } else {
                            num.sqrt()
                        };
                        sums[pair.task].0 += e;
                        sums[pair.task].1 += 1;
                    }
                }
                let grads = tape.backward(loss)?;
                model.collect_grads(&bound, &grads)?
            };
            if let Some(c) = cfg.clip_norm {
                clip_grad_norm(&mut grads, c);
            }
            let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
            let mut params: Vec<&mut Tensor<T>> = model
                .params_mut()
                .iter_mut()
                .filter(|p| p.trainable)
                .map(|p| Arc::make_mut(&mut p.value))
                .collect();
            adam.step(&mut params, &grad_refs)?;
        }

        let wall_ms = started.elapsed().as_millis();
        for (t, task) in tasks.iter().enumerate() {
            let (sum, n) = sums[t];
            if n == 0 {
                continue;
            }
            let entry = EpochLog {
                epoch,
                phase,
                task: task.label,
                loss: sum / n as f64,
                lr,
                wall_ms,
            };
            on_epoch(&entry);
            logs.push(entry);
        }
    }
    Ok(logs)
}

/// Trains every parameter jointly on all `tasks`, then stores the resulting
/// gate parameters in `memory` under each task's label.
pub fn train_foundation<T: Element>(
    model: &mut Ncwno<T>,
    tasks: &[TaskDataset],
    cfg: &TrainConfig,
    memory: &mut SemanticMemory<T>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    let mut labels: Vec<usize> = tasks.iter().map(|t| t.label).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!(
            "duplicate task labels {labels:?}"
        )));
    }
    let frames: Vec<TaskFrames> = tasks.iter().map(TaskFrames::new).collect();
    model.set_trainable(|_| true);
    let logs = fit(model, &frames, cfg, Phase::Foundation, on_epoch)?;
    let snapshot = GateSnapshot::capture(model);
    for l in labels {
        memory.store(l, snapshot.clone());
    }
    Ok(logs)
}

/// Fine-tunes only the gating parameters on `task`, starting from the gates
/// stored under the lowest label in `memory`, and stores the result under
/// `task.label`. Everything else in the model is left bit-identical.
pub fn combinatorial_transfer<T: Element>(
    model: &mut Ncwno<T>,
    memory: &mut SemanticMemory<T>,
    task: &TaskDataset,
    cfg: &TrainConfig,
    overwrite: bool,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(GateSnapshot<T>, Vec<EpochLog>)> {
    let base = *memory.labels().first().ok_or_else(|| {
        Error::InvalidArgument("semantic memory is empty; train a foundation first".into())
    })?;
    if memory.contains(task.label) && !overwrite {
        return Err(Error::InvalidArgument(format!(
            "label {} already has a gate snapshot",
            task.label
        )));
    }
    super::memory::activate_task(model, memory, base)?;
    let previous: Vec<bool> = model.params().iter().map(|p| p.trainable).collect();
    model.set_trainable(ParamGroup::is_gating);
    let result = fit(
        model,
        &[TaskFrames::new(task)],
        cfg,
        Phase::Transfer,
        on_epoch,
    );
    for (p, t) in model.params_mut().iter_mut().zip(previous) {
        p.trainable = t;
    }
    let logs = result?;
    let snapshot = GateSnapshot::capture(model);
    memory.store(task.label, snapshot.clone());
    Ok((snapshot, logs))
}
