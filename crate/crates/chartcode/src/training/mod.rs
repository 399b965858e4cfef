//! Optimization and measurement: run configuration, the multi-task loss,
//! the training loop with schedule/clipping/augmentation and JSONL run
//! logs, checkpointing, split evaluation, and the ablation grid harness.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod loss;
pub mod report;
pub mod train;

pub use ablation::{build_cells, run_ablation, utilization_balance, AblationCell, GridSelect};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::RunConfig;
pub use eval::{evaluate, evaluate_predictions, write_metrics_csv, MetricsRecord};
pub use loss::{
    compose_loss, semantic_gap, utilization_regularizer, LossBreakdown, LossWeights, SemanticMode,
};
pub use report::render_report;
pub use train::{train, StepRecord, TrainOutcome};
