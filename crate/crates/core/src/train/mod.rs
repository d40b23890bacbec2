//! Training loop, checkpoints and evaluation metrics.

mod checkpoint;
pub mod metrics;
mod trainer;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use metrics::{
    auc_roc, auc_trapezoid, average_precision, classwise_report, d_prime, inverse_normal_cdf, ClassMetrics,
    ClasswiseRow, MacroMetrics, MetricReport,
};
pub use trainer::{evaluate, write_history_csv, HistoryRow, TrainConfig, TrainOutcome, Trainer};
