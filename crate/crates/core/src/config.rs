//! Run configuration files.
//!
//! A run is described by one TOML file. Every section is optional; missing
//! values take the defaults shown here.
//!
//! ```toml
//! seed = 0               # model init, data generation and batch order
//! out = "run"            # root for data/, checkpoint/ and reports/
//!
//! [paths]                # optional overrides of the three output folders
//! data = "run/data"
//!
//! [model]                # ModelConfig fields
//! grid = [64]
//! experts = 3
//! bases = [1, 2, 3]
//!
//! [train]                # foundation phase, TrainConfig fields
//! epochs = 150
//!
//! [transfer]             # transfer phase, TrainConfig fields (epochs = 50)
//!
//! [[tasks]]
//! label = 0
//! name = "nagumo_1d"     # also the recipe unless `recipe` is given
//! role = "foundation"    # or "transfer"
//! samples = 1100         # generated samples, the last `test` held out
//! test = 100
//!
//! [ablation]
//! experts = [4, 7, 10]
//! seeds = [0, 1, 2]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continual::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pde::{recipe_on_grid, DatasetKind, Recipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Foundation,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub label: usize,
    pub name: String,
    /// Recipe to generate from; defaults to `name`.
    #[serde(default)]
    pub recipe: Option<String>,
    #[serde(default)]
    pub role: Role,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_test")]
    pub test: usize,
    /// Points per axis, when different from the recipe's.
    #[serde(default)]
    pub grid: Option<usize>,
    /// Target frames per trajectory, when different from the recipe's.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Existing dataset container; defaults to `<data>/<name>`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

fn default_samples() -> usize {
    1100
}

fn default_test() -> usize {
    100
}

impl TaskEntry {
    /// The generation recipe with grid and horizon overrides applied.
    pub fn recipe(&self) -> Result<Recipe> {
        let name = self.recipe.as_deref().unwrap_or(&self.name);
        let mut r = recipe_on_grid(name, self.grid)?;
        if let (Some(h), DatasetKind::Trajectory { window, horizon }) = (self.horizon, r.kind) {
            if h == 0 {
                return Err(Error::Config(format!(
                    "tasks.{}: horizon must be positive",
                    self.name
                )));
            }
            r.kind = DatasetKind::Trajectory { window, horizon: h };
            r.pde.frames = r.pde.frames - horizon + h;
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub experts: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            experts: vec![4, 7, 10],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "TrainConfig::transfer")]
    pub transfer: TrainConfig,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub ablation: AblationConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(
            &self
                .paths
                .data
                .clone()
                .unwrap_or_else(|| self.out.join("data")),
        )
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.resolve(
            &self
                .paths
                .checkpoint
                .clone()
                .unwrap_or_else(|| self.out.join("checkpoint")),
        )
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(
            &self
                .paths
                .reports
                .clone()
                .unwrap_or_else(|| self.out.join("reports")),
        )
    }

    pub fn dataset_dir(&self, task: &TaskEntry) -> PathBuf {
        match &task.dataset {
            Some(p) => self.resolve(p),
            None => self.data_dir().join(&task.name),
        }
    }

    pub fn tasks_with(&self, role: Role) -> impl Iterator<Item = &TaskEntry> {
        self.tasks.iter().filter(move |t| t.role == role)
    }

    pub fn task(&self, key: &str) -> Result<&TaskEntry> {
        self.tasks
            .iter()
            .find(|t| t.name == key || t.label.to_string() == key)
            .ok_or_else(|| Error::Config(format!("no task named or labelled {key:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        self.transfer
            .validate()
            .map_err(|e| Error::Config(format!("transfer: {e}")))?;
        let mut labels = HashSet::new();
        let mut names = HashSet::new();
        for t in &self.tasks {
            if !labels.insert(t.label) {
                return Err(Error::Config(format!(
                    "tasks.label: duplicate label {}",
                    t.label
                )));
            }
            if !names.insert(&t.name) {
                return Err(Error::Config(format!(
                    "tasks.name: duplicate name {:?}",
                    t.name
                )));
            }
            if t.label >= self.model.max_tasks {
                return Err(Error::Config(format!(
                    "tasks.label: {} exceeds model.max_tasks {}",
                    t.label, self.model.max_tasks
                )));
            }
            if t.name.is_empty() || t.name.contains(['/', '\\', ',']) {
                return Err(Error::Config(format!(
                    "tasks.name: {:?} is not a plain name",
                    t.name
                )));
            }
            if t.test > t.samples {
                return Err(Error::Config(format!(
                    "tasks.test: {} exceeds {} samples for {}",
                    t.test, t.samples, t.name
                )));
            }
            if t.dataset.is_none() {
                let r = t
                    .recipe()
                    .map_err(|e| Error::Config(format!("tasks.recipe: {e}")))?;
                if r.pde.grid != self.model.grid {
                    return Err(Error::Config(format!(
                        "tasks.grid: {} generates on {:?}, model.grid is {:?}",
                        t.name, r.pde.grid, self.model.grid
                    )));
                }
                if let DatasetKind::Trajectory { window, .. } = r.kind {
                    if window != self.model.in_channels {
                        return Err(Error::Config(format!(
                            "model.in_channels: {} but {} provides {window} input frames",
                            self.model.in_channels, t.name
                        )));
                    }
                }
            }
        }
        if self.ablation.experts.contains(&0) || self.ablation.experts.iter().any(|&e| e > 10) {
            return Err(Error::Config(
                "ablation.experts: counts must lie in 1..=10".into(),
            ));
        }
        Ok(())
    }
}

/// Parses and validates a config string; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text)
        .map_err(|e| Error::Config(e.to_string().trim_end().replace('\n', " ")))?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base)
}
