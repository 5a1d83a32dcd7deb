use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grf::{square_wave_ic, GrfSampler};
use super::recipes::{DatasetKind, InitialCondition, Recipe};
use super::solvers::solve;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const FORMAT: &str = "ncwno-dataset-v1";
const MANIFEST: &str = "manifest";

/// Generation record for a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub recipe: Recipe,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
}

/// Paired samples for one task.
///
/// `inputs` is `[N, d.., w]` (input frames as channels) and `outputs` is
/// `[N, T, d..]`. `grid` holds node coordinates, `[d.., rank]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub label: usize,
    pub name: String,
    pub family: String,
    pub kind: DatasetKind,
    pub grid: Tensor<f32>,
    pub inputs: Tensor<f32>,
    pub outputs: Tensor<f32>,
    pub provenance: Option<Provenance>,
}

/// Per-sample seed: a splitmix64 step from `base` at position `index`.
pub fn sample_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn initial_condition(recipe: &Recipe, sampler: Option<&GrfSampler>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (&recipe.initial, sampler) {
        (
            InitialCondition::SquareWave {
                center,
                width,
                height,
            },
            _,
        ) => {
            let c = rng.random_range(center[0]..=center[1]);
            let w = rng.random_range(width[0]..=width[1]);
            let h = rng.random_range(height[0]..=height[1]);
            square_wave_ic(c, w, h, recipe.pde.grid[0])
        }
        (InitialCondition::Grf { .. }, Some(s)) => s.sample(&mut rng),
        (InitialCondition::Grf { .. }, None) => unreachable!("sampler built for GRF recipes"),
    }
}

/// Inputs, outputs and trajectory length implied by a recipe.
fn layout(recipe: &Recipe) -> Result<(usize, usize)> {
    match recipe.kind {
        DatasetKind::Trajectory { window, horizon } => {
            if window == 0 || horizon == 0 || window + horizon > recipe.pde.frames {
                return Err(Error::InvalidArgument(format!(
                    "window {window} + horizon {horizon} exceeds {} frames",
                    recipe.pde.frames
                )));
            }
            Ok((window, horizon))
        }
        DatasetKind::Operator => {
            if recipe.pde.frames < 2 {
                return Err(Error::InvalidArgument(
                    "operator datasets need two frames".into(),
                ));
            }
            Ok((1, 1))
        }
    }
}

fn check_recipe(recipe: &Recipe) -> Result<()> {
    recipe.pde.validate()?;
    match &recipe.initial {
        InitialCondition::Grf { field } => {
            field.validate()?;
            if field.grid != recipe.pde.grid {
                return Err(Error::InvalidArgument(format!(
                    "field grid {:?} differs from solver grid {:?}",
                    field.grid, recipe.pde.grid
                )));
            }
        }
        InitialCondition::SquareWave {
            center,
            width,
            height,
        } => {
            if recipe.pde.rank() != 1 {
                return Err(Error::InvalidArgument(
                    "square-wave initial conditions are 1D".into(),
                ));
            }
            for r in [center, width, height] {
                if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                    return Err(Error::InvalidArgument(format!("bad range {r:?}")));
                }
            }
        }
    }
    layout(recipe).map(|_| ())
}

/// Generates `n` samples from `recipe`. Sample `i` depends only on
/// `(base_seed, i)`; samples are produced in parallel and ordered by index.
pub fn build_dataset(
    recipe: &Recipe,
    n: usize,
    base_seed: u64,
    label: usize,
) -> Result<TaskDataset> {
    check_recipe(recipe)?;
    let (w, t) = layout(recipe)?;
    let sampler = match &recipe.initial {
        InitialCondition::Grf { field } => Some(GrfSampler::new(field)?),
        InitialCondition::SquareWave { .. } => None,
    };
    let seeds: Vec<u64> = (0..n as u64).map(|i| sample_seed(base_seed, i)).collect();
    let grid = &recipe.pde.grid;
    let points: usize = grid.iter().product();

    let samples: Vec<Result<(Vec<f32>, Vec<f32>)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let u0 = initial_condition(recipe, sampler.as_ref(), seed);
            let traj = solve(&recipe.pde, &u0).map_err(|e| Error::Sample {
                index: i,
                source: Box::new(e),
            })?;
            let frames = traj.data();
            let (first, out_start) = match recipe.kind {
                DatasetKind::Trajectory { .. } => (0, w),
                DatasetKind::Operator => (0, recipe.pde.frames - 1),
            };
            let mut input = vec![0f32; points * w];
            for f in 0..w {
                let src = &frames[(first + f) * points..(first + f + 1) * points];
                for (p, &v) in src.iter().enumerate() {
                    input[p * w + f] = v as f32;
                }
            }
            let output = frames[out_start * points..(out_start + t) * points]
                .iter()
                .map(|&v| v as f32)
                .collect();
            Ok((input, output))
        })
        .collect();

    let mut inputs = Vec::with_capacity(n * points * w);
    let mut outputs = Vec::with_capacity(n * points * t);
    for s in samples {
        let (i, o) = s?;
        inputs.extend(i);
        outputs.extend(o);
    }
    let mut in_shape = vec![n];
    in_shape.extend(grid);
    in_shape.push(w);
    let mut out_shape = vec![n, t];
    out_shape.extend(grid);

    Ok(TaskDataset {
        label,
        name: recipe.name.clone(),
        family: recipe.pde.equation.family().to_string(),
        kind: recipe.kind,
        grid: node_grid(recipe),
        inputs: Tensor::new(in_shape, inputs)?,
        outputs: Tensor::new(out_shape, outputs)?,
        provenance: Some(Provenance {
            recipe: recipe.clone(),
            base_seed,
            seeds,
        }),
    })
}

fn node_grid(recipe: &Recipe) -> Tensor<f32> {
    let grid = &recipe.pde.grid;
    let axes: Vec<Vec<f64>> = grid.iter().map(|&n| recipe.pde.axis(n)).collect();
    let rank = grid.len();
    let points: usize = grid.iter().product();
    let mut shape = grid.clone();
    shape.push(rank);
    let mut data = Vec::with_capacity(points * rank);
    for p in 0..points {
        let mut rest = p;
        let mut idx = vec![0; rank];
        for a in (0..rank).rev() {
            idx[a] = rest % grid[a];
            rest /= grid[a];
        }
        for a in 0..rank {
            data.push(axes[a][idx[a]] as f32);
        }
    }
    Tensor::new(shape, data).expect("grid shape")
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial grid shape.
    pub fn spatial(&self) -> &[usize] {
        let s = self.grid.shape();
        &s[..s.len() - 1]
    }

    /// Number of input frames per sample.
    pub fn window(&self) -> usize {
        *self.inputs.shape().last().expect("rank >= 2")
    }

    /// Number of target frames per sample.
    pub fn horizon(&self) -> usize {
        self.outputs.shape()[1]
    }

    /// Samples `range` as a new dataset (provenance seeds sliced to match).
    pub fn select(&self, range: std::ops::Range<usize>) -> TaskDataset {
        let slice = |t: &Tensor<f32>| {
            let per = t.len() / t.shape()[0].max(1);
            let mut shape = t.shape().to_vec();
            shape[0] = range.len();
            Tensor::new(shape, t.data()[range.start * per..range.end * per].to_vec())
                .expect("slice shape")
        };
        TaskDataset {
            inputs: slice(&self.inputs),
            outputs: slice(&self.outputs),
            provenance: self.provenance.as_ref().map(|p| Provenance {
                seeds: p.seeds[range.clone()].to_vec(),
                ..p.clone()
            }),
            ..self.clone()
        }
    }

    /// Train/test split with the last `test` samples held out.
    pub fn split(&self, test: usize) -> Result<(TaskDataset, TaskDataset)> {
        let n = self.len();
        if test > n {
            return Err(Error::InvalidArgument(format!(
                "test size {test} exceeds {n} samples"
            )));
        }
        Ok((self.select(0..n - test), self.select(n - test..n)))
    }

    /// Full recorded sequence of sample `i`: input frames followed by target
    /// frames, each shaped like the grid.
    pub fn frames(&self, i: usize) -> Vec<Tensor<f32>> {
        let spatial = self.spatial().to_vec();
        let points: usize = spatial.iter().product();
        let w = self.window();
        let input = &self.inputs.data()[i * points * w..(i + 1) * points * w];
        let mut out: Vec<Tensor<f32>> = (0..w)
            .map(|f| Tensor::from_fn(&spatial, |p| input[p * w + f]))
            .collect();
        let t = self.horizon();
        let target = &self.outputs.data()[i * points * t..(i + 1) * points * t];
        for f in 0..t {
            out.push(
                Tensor::new(
                    spatial.clone(),
                    target[f * points..(f + 1) * points].to_vec(),
                )
                .expect("frame"),
            );
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    label: usize,
    name: String,
    family: String,
    dtype: String,
    samples: usize,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    grid_shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_seed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<String>>,
    kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recipe: Option<Recipe>,
}

fn hex_seed(s: u64) -> String {
    format!("{s:016x}")
}

fn parse_seed(s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|_| Error::Format(format!("seed {s:?} is not hex")))
}

/// Writes `manifest`, `inputs.bin`, `outputs.bin` and `grid.bin` into `dir`.
pub fn save_dataset(data: &TaskDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        label: data.label,
        name: data.name.clone(),
        family: data.family.clone(),
        dtype: f32::DTYPE.as_str().into(),
        samples: data.len(),
        input_shape: data.inputs.shape().to_vec(),
        output_shape: data.outputs.shape().to_vec(),
        grid_shape: data.grid.shape().to_vec(),
        base_seed: data.provenance.as_ref().map(|p| hex_seed(p.base_seed)),
        seeds: data
            .provenance
            .as_ref()
            .map(|p| p.seeds.iter().map(|&s| hex_seed(s)).collect()),
        kind: data.kind,
        recipe: data.provenance.as_ref().map(|p| p.recipe.clone()),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    for (file, t) in [
        ("inputs.bin", &data.inputs),
        ("outputs.bin", &data.outputs),
        ("grid.bin", &data.grid),
    ] {
        let path = dir.join(file);
        fs::write(&path, t.bytes_le()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn read_blob(dir: &Path, file: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let n: usize = shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes, manifest implies {}",
            path.display(),
            bytes.len(),
            n * 4
        )));
    }
    let data = bytes.chunks_exact(4).map(f32::read_le).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Loads a dataset container. Works for externally produced data too: the
/// seed and recipe fields of the manifest are optional.
pub fn load_dataset(dir: &Path) -> Result<TaskDataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.format != FORMAT {
        return Err(Error::Format(format!(
            "unsupported dataset format {:?}",
            m.format
        )));
    }
    if m.dtype != f32::DTYPE.as_str() {
        return Err(Error::Format(format!(
            "dataset dtype {:?}, expected float32",
            m.dtype
        )));
    }
    let rank = m.grid_shape.len().saturating_sub(1);
    let consistent = m.input_shape.len() == rank + 2
        && m.output_shape.len() == rank + 2
        && m.grid_shape.last() == Some(&rank)
        && m.input_shape[0] == m.samples
        && m.output_shape[0] == m.samples
        && m.input_shape[1..=rank] == m.grid_shape[..rank]
        && m.output_shape[2..] == m.grid_shape[..rank];
    if !consistent {
        return Err(Error::Format(format!(
            "{}: inconsistent shapes",
            path.display()
        )));
    }
    let provenance = match (m.recipe, m.base_seed, m.seeds) {
        (Some(recipe), Some(base), Some(seeds)) => {
            let seeds = seeds
                .iter()
                .map(|s| parse_seed(s))
                .collect::<Result<Vec<_>>>()?;
            if seeds.len() != m.samples {
                return Err(Error::Format(format!(
                    "{} seeds for {} samples",
                    seeds.len(),
                    m.samples
                )));
            }
            Some(Provenance {
                recipe,
                base_seed: parse_seed(&base)?,
                seeds,
            })
        }
        _ => None,
    };
    Ok(TaskDataset {
        label: m.label,
        name: m.name,
        family: m.family,
        kind: m.kind,
        grid: read_blob(dir, "grid.bin", &m.grid_shape)?,
        inputs: read_blob(dir, "inputs.bin", &m.input_shape)?,
        outputs: read_blob(dir, "outputs.bin", &m.output_shape)?,
        provenance,
    })
}
