//! The `ncwno` command line: `generate`, `train-foundation`, `transfer`,
//! `evaluate` and `ablate-experts`, all driven by one config file.
//!
//! Global flags may also come from the environment: `NCWNO_CONFIG`,
//! `NCWNO_SEED` and `NCWNO_OUT`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, Role, RunConfig, TaskEntry};
use crate::continual::{
    activate_task, append_run_log, combinatorial_transfer, cosine_similarity, evaluate_one_step,
    evaluate_rollout, load_checkpoint, save_checkpoint, train_foundation, write_metrics_csv,
    Checkpoint, EpochLog, Interval, MetricRow, SemanticMemory, TrainConfig,
};
use crate::error::{Error, Result};
use crate::model::Ncwno;
use crate::pde::{build_dataset, load_dataset, sample_seed, save_dataset, TaskDataset};
use crate::tensor::Tensor;

#[derive(Debug, Parser)]
#[command(
    name = "ncwno",
    version,
    about = "Wavelet-expert neural operators for families of PDEs"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "NCWNO_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true, env = "NCWNO_SEED")]
    pub seed: Option<u64>,
    /// Overrides the config's output root.
    #[arg(long, global = true, env = "NCWNO_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate every task's dataset.
    Generate,
    /// Train the foundation model on the foundation tasks.
    TrainFoundation,
    /// Gate-only transfer to one task, or to every transfer task.
    Transfer {
        #[arg(long)]
        task: Option<String>,
        /// Replace an existing gate snapshot for the task.
        #[arg(long)]
        overwrite: bool,
    },
    /// Evaluate stored tasks on their test splits.
    Evaluate {
        #[arg(long)]
        task: Option<String>,
    },
    /// Repeat foundation training and transfer over several expert counts.
    AblateExperts,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::TrainFoundation => "train-foundation",
            Command::Transfer { .. } => "transfer",
            Command::Evaluate { .. } => "evaluate",
            Command::AblateExperts => "ablate-experts",
        }
    }
}

/// Parses arguments, runs the command and returns the process exit status.
/// Failures print one `error[<category>]: <message>` line to stderr.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            eprintln!(
                "error[{}]: {}",
                cat.as_str(),
                e.to_string().replace('\n', " ")
            );
            cat.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut cfg = parse_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = std::path::absolute(out).map_err(|e| Error::io(out, e))?;
    }
    run_command(&cfg, &cli.command)
}

fn task_seed(seed: u64, label: usize) -> u64 {
    sample_seed(seed ^ 0x6461_7461_7365_7473, label as u64)
}

fn with_seed(t: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..t.clone() }
}

/// Executes one subcommand against a validated config.
pub fn run_command(cfg: &RunConfig, command: &Command) -> Result<()> {
    let reports = cfg.reports_dir();
    fs::create_dir_all(&reports).map_err(|e| Error::io(&reports, e))?;
    match command {
        Command::Generate => generate(cfg)?,
        Command::TrainFoundation => foundation(cfg)?,
        Command::Transfer { task, overwrite } => transfer(cfg, task.as_deref(), *overwrite)?,
        Command::Evaluate { task } => evaluate(cfg, task.as_deref())?,
        Command::AblateExperts => ablate(cfg)?,
    }
    write_stamp(cfg, command.name())
}

fn generate(cfg: &RunConfig) -> Result<()> {
    for t in &cfg.tasks {
        if t.dataset.is_some() {
            println!("{}: external dataset, skipped", t.name);
            continue;
        }
        let recipe = t.recipe()?;
        let data = build_dataset(&recipe, t.samples, task_seed(cfg.seed, t.label), t.label)?;
        let dir = cfg.dataset_dir(t);
        save_dataset(&data, &dir)?;
        println!("{}: {} samples -> {}", t.name, data.len(), dir.display());
    }
    Ok(())
}

fn load_split(cfg: &RunConfig, t: &TaskEntry) -> Result<(TaskDataset, TaskDataset)> {
    let mut data = load_dataset(&cfg.dataset_dir(t))?;
    data.label = t.label;
    data.split(t.test)
}

fn log_sink(cfg: &RunConfig) -> impl FnMut(&EpochLog) {
    let path = cfg.reports_dir().join("run.log");
    move |e: &EpochLog| {
        eprintln!("{e}");
        if let Err(err) = append_run_log(&path, std::slice::from_ref(e)) {
            eprintln!("warning: {err}");
        }
    }
}

fn foundation(cfg: &RunConfig) -> Result<()> {
    let entries: Vec<&TaskEntry> = cfg.tasks_with(Role::Foundation).collect();
    if entries.is_empty() {
        return Err(Error::Config(
            "tasks: no task has role = \"foundation\"".into(),
        ));
    }
    let train: Vec<TaskDataset> = entries
        .iter()
        .map(|t| load_split(cfg, t).map(|(tr, _)| tr))
        .collect::<Result<_>>()?;
    let mut model = Ncwno::<f32>::new(cfg.model.clone(), cfg.seed)?;
    let mut memory = SemanticMemory::new();
    train_foundation(
        &mut model,
        &train,
        &with_seed(&cfg.train, cfg.seed),
        &mut memory,
        &mut log_sink(cfg),
    )?;
    let ckpt = Checkpoint {
        model,
        memory,
        tasks: entries.iter().map(|t| (t.label, t.name.clone())).collect(),
        seed: cfg.seed,
    };
    let dir = cfg.checkpoint_dir();
    save_checkpoint(&dir, &ckpt)?;
    println!("foundation checkpoint -> {}", dir.display());
    Ok(())
}

fn transfer(cfg: &RunConfig, key: Option<&str>, overwrite: bool) -> Result<()> {
    let dir = cfg.checkpoint_dir();
    let mut ckpt: Checkpoint<f32> = load_checkpoint(&dir)?;
    let targets: Vec<&TaskEntry> = match key {
        Some(k) => vec![cfg.task(k)?],
        None => cfg
            .tasks_with(Role::Transfer)
            .filter(|t| overwrite || !ckpt.memory.contains(t.label))
            .collect(),
    };
    if targets.is_empty() {
        println!("nothing to transfer");
        return Ok(());
    }
    for t in targets {
        let (train, _) = load_split(cfg, t)?;
        let seed = cfg.seed ^ (t.label as u64);
        combinatorial_transfer(
            &mut ckpt.model,
            &mut ckpt.memory,
            &train,
            &with_seed(&cfg.transfer, seed),
            overwrite,
            &mut log_sink(cfg),
        )?;
        ckpt.tasks.insert(t.label, t.name.clone());
        save_checkpoint(&dir, &ckpt)?;
        println!("{}: gates stored under label {}", t.name, t.label);
    }
    Ok(())
}

fn metric_rows(
    name: &str,
    one_step: Interval,
    report: &crate::continual::RolloutReport,
) -> Vec<MetricRow> {
    let mut rows = vec![MetricRow {
        task: name.to_string(),
        step: "one-step".into(),
        accuracy: one_step,
    }];
    rows.extend(report.per_step.iter().enumerate().map(|(i, ci)| MetricRow {
        task: name.to_string(),
        step: (i + 1).to_string(),
        accuracy: *ci,
    }));
    rows.push(MetricRow {
        task: name.to_string(),
        step: "all".into(),
        accuracy: report.overall,
    });
    rows
}

fn evaluate(cfg: &RunConfig, key: Option<&str>) -> Result<()> {
    let ckpt: Checkpoint<f32> = load_checkpoint(&cfg.checkpoint_dir())?;
    let mut model = ckpt.model.clone();
    let targets: Vec<&TaskEntry> = match key {
        Some(k) => vec![cfg.task(k)?],
        None => cfg
            .tasks
            .iter()
            .filter(|t| ckpt.memory.contains(t.label))
            .collect(),
    };
    let mut rows = Vec::new();
    for t in &targets {
        activate_task(&mut model, &ckpt.memory, t.label)?;
        let (_, test) = load_split(cfg, t)?;
        let one = evaluate_one_step(&model, &test, t.label)?;
        let report = evaluate_rollout(&model, &test, t.label)?;
        println!(
            "{}: one-step acc {:.4}, rollout acc {:.4} [{:.4}, {:.4}]",
            t.name, one.mean, report.overall.mean, report.overall.low, report.overall.high
        );
        rows.extend(metric_rows(&t.name, one, &report));
    }
    let reports = cfg.reports_dir();
    let name = match key {
        Some(_) => format!("metrics-{}.csv", targets[0].name),
        None => "metrics.csv".into(),
    };
    write_metrics_csv(&reports.join(name), &rows)?;
    write_similarity(cfg, &reports.join("similarity.csv"))?;
    let script = reports.join("plot_metrics.py");
    fs::write(&script, PLOT_SCRIPT).map_err(|e| Error::io(&script, e))
}

/// Pairwise cosine similarity between the target tensors of every available
/// dataset, over the samples they have in common. `NA` marks shape mismatches.
fn write_similarity(cfg: &RunConfig, path: &Path) -> Result<()> {
    let mut sets: Vec<(String, Tensor<f32>)> = Vec::new();
    for t in &cfg.tasks {
        let dir = cfg.dataset_dir(t);
        if dir.join("manifest").exists() {
            sets.push((t.name.clone(), load_dataset(&dir)?.outputs));
        }
    }
    let n = sets.iter().map(|(_, o)| o.shape()[0]).min().unwrap_or(0);
    let head = |t: &Tensor<f32>| {
        let per = t.len() / t.shape()[0].max(1);
        let mut shape = t.shape().to_vec();
        shape[0] = n;
        Tensor::new(shape, t.data()[..n * per].to_vec())
    };
    let mut text = String::from("task");
    for (name, _) in &sets {
        write!(text, ",{name}").expect("string");
    }
    text.push('\n');
    for (a, x) in &sets {
        text.push_str(a);
        for (_, y) in &sets {
            let (x, y) = (head(x)?, head(y)?);
            match cosine_similarity(&x, &y) {
                Ok(s) => write!(text, ",{s:.8}").expect("string"),
                Err(_) => text.push_str(",NA"),
            }
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ablate(cfg: &RunConfig) -> Result<()> {
    let found: Vec<&TaskEntry> = cfg.tasks_with(Role::Foundation).collect();
    let targets: Vec<&TaskEntry> = cfg.tasks_with(Role::Transfer).collect();
    if found.is_empty() || targets.is_empty() {
        return Err(Error::Config(
            "tasks: ablation needs foundation and transfer tasks".into(),
        ));
    }
    let train: Vec<TaskDataset> = found
        .iter()
        .map(|t| load_split(cfg, t).map(|(tr, _)| tr))
        .collect::<Result<_>>()?;
    let splits: Vec<(TaskDataset, TaskDataset)> = targets
        .iter()
        .map(|t| load_split(cfg, t))
        .collect::<Result<_>>()?;
    let mut detail = String::from("experts,seed,task,rel_l2\n");
    let mut summary = String::from("experts,mean_rel_l2,ci95_low,ci95_high\n");
    for &k in &cfg.ablation.experts {
        let mut errors = Vec::new();
        for &seed in &cfg.ablation.seeds {
            let mut mc = cfg.model.clone();
            mc.experts = k;
            mc.bases = (1..=k).collect();
            let mut model = Ncwno::<f32>::new(mc, seed)?;
            let mut memory = SemanticMemory::new();
            train_foundation(
                &mut model,
                &train,
                &with_seed(&cfg.train, seed),
                &mut memory,
                &mut |_| {},
            )?;
            for (t, (tr, te)) in targets.iter().zip(&splits) {
                let tc = with_seed(&cfg.transfer, seed ^ t.label as u64);
                combinatorial_transfer(&mut model, &mut memory, tr, &tc, false, &mut |_| {})?;
                let err = 1.0 - evaluate_rollout(&model, te, t.label)?.overall.mean;
                println!("experts {k}, seed {seed}, {}: rel L2 {err:.5}", t.name);
                writeln!(detail, "{k},{seed},{},{err:.8}", t.name).expect("string");
                errors.push(err);
            }
        }
        let ci = Interval::from_samples(&errors)?;
        writeln!(summary, "{k},{:.8},{:.8},{:.8}", ci.mean, ci.low, ci.high).expect("string");
    }
    let reports = cfg.reports_dir();
    for (name, text) in [("ablation.csv", detail), ("ablation_summary.csv", summary)] {
        let p = reports.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn write_stamp(cfg: &RunConfig, command: &str) -> Result<()> {
    // output locations do not influence any artifact, so they stay out of the hash
    let hashed = RunConfig {
        out: PathBuf::new(),
        paths: Default::default(),
        ..cfg.clone()
    };
    let effective = toml::to_string(&hashed).map_err(|e| Error::Format(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(effective.as_bytes()));
    let text = format!(
        "command = \"{command}\"\nconfig_sha256 = \"{hash}\"\nseed = \"{:016x}\"\nncwno_version = \"{}\"\n",
        cfg.seed,
        env!("CARGO_PKG_VERSION")
    );
    let path = cfg.reports_dir().join(format!("stamp-{command}.toml"));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot accuracy curves and the similarity matrix written by `ncwno evaluate`."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent

curves = {}
with open(here / "metrics.csv") as f:
    for row in csv.DictReader(f):
        if row["step"].isdigit():
            curves.setdefault(row["task"], []).append(
                (int(row["step"]), float(row["mean_acc"]), float(row["ci95_low"]), float(row["ci95_high"]))
            )

fig, ax = plt.subplots(figsize=(6, 4))
for task, pts in curves.items():
    s, m, lo, hi = zip(*sorted(pts))
    ax.plot(s, m, label=task)
    ax.fill_between(s, lo, hi, alpha=0.2)
ax.set_xlabel("forecast step")
ax.set_ylabel("accuracy")
ax.legend()
fig.tight_layout()
fig.savefig(here / "accuracy.png", dpi=150)

with open(here / "similarity.csv") as f:
    rows = list(csv.reader(f))
names = rows[0][1:]
values = [[float(v) if v != "NA" else float("nan") for v in r[1:]] for r in rows[1:]]
fig, ax = plt.subplots(figsize=(5, 4))
im = ax.imshow(values, vmin=-1, vmax=1, cmap="coolwarm")
ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
ax.set_yticks(range(len(names)), names)
fig.colorbar(im)
fig.tight_layout()
fig.savefig(here / "similarity.png", dpi=150)
"#;
