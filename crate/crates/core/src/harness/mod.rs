//! Task data, training to convergence, evaluation, experiment modes and run
//! artifacts.

mod artifacts;
mod eval;
mod experiment;
mod task;
mod train;

pub use artifacts::{
    epoch_log_csv, load_checkpoint, metrics_records, save_checkpoint, summary_table, write_outcome, CheckpointMeta,
    MetricsRecord, CHECKPOINT_FORMAT, CHECKPOINT_META,
};
pub use eval::{evaluate, metrics, predict_windows, EvalReport, MetricAccumulator, MAPE_MIN_ABS};
pub use experiment::{
    run_experiment, sparsity_transform, Ablation, ExperimentConfig, ExperimentOutcome, Mode, Sparsity, TaskRun,
};
pub use task::TaskData;
pub use train::{
    batch_gradients, no_observer, train_until_convergence, EpochObserver, EpochRecord, Phase, TrainConfig,
    TrainOutcome,
};
