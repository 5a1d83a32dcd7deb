use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::metrics::Interval;
use super::train::EpochLog;
use crate::error::{Error, Result};

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: String,
    /// Forecast step (1-based) or `all` for the whole horizon.
    pub step: String,
    pub accuracy: Interval,
}

pub const METRICS_HEADER: &str = "task,step,mean_acc,ci95_low,ci95_high";

/// Writes `task,step,mean_acc,ci95_low,ci95_high` rows, replacing `path`.
pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut text = format!("{METRICS_HEADER}\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{:.8},{:.8},{:.8}\n",
            r.task, r.step, r.accuracy.mean, r.accuracy.low, r.accuracy.high
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends entries to the run log, writing the header first if the file is new.
pub fn append_run_log(path: &Path, entries: &[EpochLog]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(EpochLog::HEADER);
        text.push('\n');
    }
    for e in entries {
        text.push_str(&e.to_string());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
