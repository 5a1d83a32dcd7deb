//! Foundation training, gate-only transfer, semantic memory, rollout and metrics.

mod checkpoint;
mod memory;
mod metrics;
mod report;
mod rollout;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use memory::{activate_task, GateSnapshot, SemanticMemory};
pub use metrics::{accuracy, cosine_similarity, relative_l2, Interval};
pub use report::{append_run_log, write_metrics_csv, MetricRow};
pub use rollout::{
    evaluate_one_step, evaluate_rollout, rollout, rollout_batch, OneStepModel, RolloutReport,
    RolloutSpec,
};
pub use train::{combinatorial_transfer, train_foundation, EpochLog, LossKind, Phase, TrainConfig};
