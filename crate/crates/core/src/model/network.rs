use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::ops::{gated_sum, wavelet_expert};
use crate::tensor::{Element, Gradients, Tape, Tensor, Var};
use crate::wavelet::{daubechies_filters, CoarseBands};

use super::config::{GateMode, ModelConfig};
use super::params::{Dense, Init, ParamBuilder, ParamGroup, Parameter};

#[derive(Debug, Clone)]
struct BlockLayout {
    /// `experts[e][band]`: kernel parameter index.
    experts: Vec<Vec<usize>>,
    skip: Dense,
    convs: Vec<Dense>,
    dense: Vec<Dense>,
}

#[derive(Debug, Clone)]
struct Layout {
    lift: Dense,
    blocks: Vec<BlockLayout>,
    encoder: Vec<Dense>,
    projection: [Dense; 2],
}

/// Neural combinatorial wavelet neural operator.
#[derive(Debug, Clone)]
pub struct Ncwno<T> {
    config: ModelConfig,
    params: Vec<Parameter<T>>,
    layout: Layout,
    /// One transform per expert slot; shared by all blocks.
    bands: Vec<Arc<CoarseBands<T>>>,
}

/// Parameters recorded on a tape, in the model's parameter order.
pub struct Bound<'t, T> {
    pub vars: Vec<Var<'t, T>>,
}

impl<T: Element> Ncwno<T> {
    /// Builds a freshly initialized model from `config`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let bands = build_bands(&config)?;
        let mut pb = ParamBuilder::<T>::new(seed);
        let c = &config;
        let lift = pb.dense("lift", ParamGroup::Lift, c.lift_inputs(), c.width);
        let nb = bands[0].band_count();
        let mut blocks = Vec::with_capacity(c.blocks);
        for j in 0..c.blocks {
            let experts = (0..c.experts)
                .map(|e| {
                    let npos = bands[e].plan().coarse_len();
                    let scale = 1.0 / (c.width * c.width) as f64;
                    (0..nb)
                        .map(|band| {
                            pb.add(
                                format!("block{j}.expert{e}.kappa{band}"),
                                ParamGroup::Expert,
                                &[npos, c.width, c.width],
                                Init::Unit(scale),
                            )
                        })
                        .collect()
                })
                .collect();
            let skip = pb.dense(
                &format!("block{j}.skip"),
                ParamGroup::Skip,
                c.width,
                c.width,
            );
            let mut convs = Vec::new();
            let mut features = c.grid_points();
            if c.rank() == 2 {
                let (k, ch) = (c.gate_conv_kernel, c.gate_conv_channels);
                for (i, cin) in [1, ch, ch].into_iter().enumerate() {
                    convs.push(pb.conv(&format!("block{j}.gate.conv{i}"), k, cin, ch));
                }
                features = 4 * ch;
            }
            let mut widths = vec![features + c.label_dim];
            widths.extend(&c.gate_hidden);
            widths.push(c.gate_outputs());
            let dense = widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    pb.dense(
                        &format!("block{j}.gate.dense{i}"),
                        ParamGroup::Gate,
                        w[0],
                        w[1],
                    )
                })
                .collect();
            blocks.push(BlockLayout {
                experts,
                skip,
                convs,
                dense,
            });
        }
        let enc_widths = [c.max_tasks, c.label_dim, c.label_dim, c.label_dim];
        let encoder = enc_widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                pb.dense(
                    &format!("encoder.dense{i}"),
                    ParamGroup::Encoder,
                    w[0],
                    w[1],
                )
            })
            .collect();
        let projection = [
            pb.dense("proj0", ParamGroup::Projection, c.width, c.projection_width),
            pb.dense(
                "proj1",
                ParamGroup::Projection,
                c.projection_width,
                c.out_channels,
            ),
        ];
        Ok(Self {
            params: pb.params,
            layout: Layout {
                lift,
                blocks,
                encoder,
                projection,
            },
            bands,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &*p.value)
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    /// Points parameter `name` at an existing shared tensor.
    pub(crate) fn set_param_shared(&mut self, name: &str, value: Arc<Tensor<T>>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: {:?} cannot replace {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Replaces the value of parameter `name`; the shape must not change.
    pub fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: {:?} cannot replace {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = Arc::new(value);
        Ok(())
    }

    /// Marks parameters trainable when `keep` returns true for their group.
    pub fn set_trainable(&mut self, keep: impl Fn(ParamGroup) -> bool) {
        for p in &mut self.params {
            p.trainable = keep(p.group);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Converts every parameter to another element type.
    pub fn cast<U: Element>(&self) -> Result<Ncwno<U>> {
        Ok(Ncwno {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    group: p.group,
                    value: Arc::new(p.value.cast()),
                    trainable: p.trainable,
                })
                .collect(),
            layout: self.layout.clone(),
            bands: build_bands(&self.config)?,
        })
    }

    /// Records every parameter on `tape`: trainable ones as gradient leaves,
    /// the rest as constants.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| {
                    if p.trainable {
                        tape.leaf(p.value.clone())
                    } else {
                        tape.constant(p.value.clone())
                    }
                })
                .collect(),
        }
    }

    /// Records everything as constants, for inference.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| tape.constant(p.value.clone()))
                .collect(),
        }
    }

    /// Gradient of each trainable parameter, in parameter order. Errors if a
    /// frozen parameter received a gradient.
    pub fn collect_grads(
        &self,
        bound: &Bound<'_, T>,
        grads: &Gradients<T>,
    ) -> Result<Vec<Tensor<T>>> {
        let mut out = Vec::new();
        for (p, v) in self.params.iter().zip(&bound.vars) {
            if p.trainable {
                out.push(grads.get_or_zeros(*v));
            } else if grads.get(*v).is_some() {
                return Err(Error::FrozenGradient(p.name.clone()));
            }
        }
        Ok(out)
    }

    /// Label embedding `[batch, label_dim]` for one label per sample.
    pub fn encode_labels<'t>(&self, bound: &Bound<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
        let tape = bound.vars[0].tape();
        let m = self.config.max_tasks;
        let mut code = Tensor::zeros(&[labels.len(), m]);
        for (i, &l) in labels.iter().enumerate() {
            if l >= m {
                return Err(Error::LabelOutOfRange { label: l, max: m });
            }
            code.data_mut()[i * m + l] = T::one();
        }
        let mut h = tape.constant(code);
        for d in &self.layout.encoder {
            h = h.channel_mix(&bound.vars[d.w], Some(&bound.vars[d.b]))?;
        }
        Ok(h)
    }

    /// Expert probabilities `[batch, experts, width]` for block `block`;
    /// each `(batch, :, channel)` column sums to one.
    pub fn gate_probabilities<'t>(
        &self,
        bound: &Bound<'t, T>,
        block: usize,
        v: Var<'t, T>,
        embedding: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let c = &self.config;
        let layout = self.block_layout(block)?;
        let vs = v.shape();
        let batch = vs[0];
        let summary = v.mean_last()?;
        let mut features = if c.rank() == 1 {
            summary.reshape(&[batch, c.grid_points()])?
        } else {
            let mut h = summary.reshape(&[batch, c.grid[0], c.grid[1], 1])?;
            for (i, conv) in layout.convs.iter().enumerate() {
                let stride = if i == 0 { 2 } else { 1 };
                h = h
                    .conv2d(&bound.vars[conv.w], &bound.vars[conv.b], stride)?
                    .mish();
            }
            h.adaptive_avg_pool2d((2, 2))?
                .reshape(&[batch, 4 * c.gate_conv_channels])?
        };
        features = features.concat_last(&embedding)?;
        let last = layout.dense.len() - 1;
        for (i, d) in layout.dense.iter().enumerate() {
            features = features.channel_mix(&bound.vars[d.w], Some(&bound.vars[d.b]))?;
            if i < last {
                features = features.mish();
            }
        }
        let logits = match c.gate_mode {
            GateMode::PerChannel => features.reshape(&[batch, c.experts, c.width])?,
            GateMode::Broadcast => features.tile(c.width),
        };
        logits.softmax(1)
    }

    /// Output of expert `expert` in block `block`; same shape as `v`.
    pub fn local_wavelet_expert<'t>(
        &self,
        bound: &Bound<'t, T>,
        block: usize,
        expert: usize,
        v: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let layout = self.block_layout(block)?;
        let ids = layout
            .experts
            .get(expert)
            .ok_or_else(|| Error::InvalidArgument(format!("expert {expert} out of range")))?;
        let kernels: Vec<Var<'t, T>> = ids.iter().map(|&i| bound.vars[i]).collect();
        wavelet_expert(&v, &kernels, self.bands[expert].clone())
    }

    /// `mish(sum_e beta_e * expert_e(v) + skip(v))`.
    pub fn expert_block_forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        block: usize,
        v: Var<'t, T>,
        embedding: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let beta = self.gate_probabilities(bound, block, v, embedding)?;
        let experts = (0..self.config.experts)
            .map(|e| self.local_wavelet_expert(bound, block, e, v))
            .collect::<Result<Vec<_>>>()?;
        let mixed = gated_sum(&beta, &experts)?;
        let skip = self.block_layout(block)?.skip;
        let sv = v.channel_mix(&bound.vars[skip.w], Some(&bound.vars[skip.b]))?;
        Ok(mixed.add(&sv)?.mish())
    }

    /// Full forward pass: `input` is `[batch, grid.., in_channels]`, output is
    /// `[batch, grid.., out_channels]`.
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, T>,
        input: &Tensor<T>,
        labels: &[usize],
    ) -> Result<Var<'t, T>> {
        let c = &self.config;
        let s = input.shape();
        if s.len() != c.rank() + 2
            || s[1..=c.rank()] != c.grid[..]
            || s[c.rank() + 1] != c.in_channels
        {
            return Err(Error::Shape(format!(
                "input {s:?} does not match [batch, {:?}, {}]",
                c.grid, c.in_channels
            )));
        }
        if labels.len() != s[0] {
            return Err(Error::Shape(format!(
                "{} labels for batch of {}",
                labels.len(),
                s[0]
            )));
        }
        let tape = bound.vars[0].tape();
        let coords = tape.constant(coordinates(&c.grid, s[0]));
        let a = tape.constant(input.clone()).concat_last(&coords)?;
        let emb = self.encode_labels(bound, labels)?;
        let l = self.layout.lift;
        let mut v = a.channel_mix(&bound.vars[l.w], Some(&bound.vars[l.b]))?;
        for j in 0..c.blocks {
            v = self.expert_block_forward(bound, j, v, emb)?;
        }
        let [p0, p1] = self.layout.projection;
        v.channel_mix(&bound.vars[p0.w], Some(&bound.vars[p0.b]))?
            .mish()
            .channel_mix(&bound.vars[p1.w], Some(&bound.vars[p1.b]))
    }

    /// Inference without gradient bookkeeping.
    pub fn predict(&self, input: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let bound = self.bind_frozen(&tape);
        let out = self.forward(&bound, input, labels)?.value();
        out.ensure_finite("model output")?;
        Ok((*out).clone())
    }

    fn block_layout(&self, block: usize) -> Result<&BlockLayout> {
        self.layout
            .blocks
            .get(block)
            .ok_or_else(|| Error::InvalidArgument(format!("block {block} out of range")))
    }
}

fn build_bands<T: Element>(config: &ModelConfig) -> Result<Vec<Arc<CoarseBands<T>>>> {
    config
        .bases
        .iter()
        .map(|&n| {
            let bank = daubechies_filters(n)?;
            Ok(Arc::new(CoarseBands::new(
                &config.grid,
                &bank,
                config.levels,
            )?))
        })
        .collect()
}

/// Normalized coordinates in `[0, 1]`, one channel per axis, `[batch, grid.., rank]`.
pub fn coordinates<T: Element>(grid: &[usize], batch: usize) -> Tensor<T> {
    let axis = |n: usize, i: usize| {
        if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.0
        }
    };
    let rank = grid.len();
    let points: usize = grid.iter().product();
    let mut out = Vec::with_capacity(batch * points * rank);
    for _ in 0..batch {
        for p in 0..points {
            if rank == 1 {
                out.push(T::from_f64c(axis(grid[0], p)));
            } else {
                out.push(T::from_f64c(axis(grid[0], p / grid[1])));
                out.push(T::from_f64c(axis(grid[1], p % grid[1])));
            }
        }
    }
    let mut shape = vec![batch];
    shape.extend(grid);
    shape.push(rank);
    Tensor::new(shape, out).expect("coordinate shape")
}
