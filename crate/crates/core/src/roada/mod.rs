//! Rolling adaptation across tasks: prompts summarizing each task, a
//! warm-up that freezes weights whose snapshots barely move, and per-task
//! refinement of the remaining weights.

mod freeze;
mod prompt;
mod rolling;

pub use freeze::{
    apply_freeze, histogram_edges, variance_histogram, variance_partition, FreezeEntry, FreezeMode, FreezeReport,
    FreezeSummary, SnapshotHistory, HISTOGRAM_BINS,
};
pub use prompt::{
    autoencoder_inputs, build_prompt, daily_average_sample, encode, train_autoencoder, AutoencoderConfig,
    TaskPromptArtifact,
};
pub use rolling::{
    frozen_fraction, refine, roada_full, shared_model_config, task_prompts, warmup_rolling, PhaseContext, PhaseKind,
    PhaseObserver, PhaseRecord, PromptSource, RoAdaConfig, RoadaOutcome, TaskResult, WarmupOutcome,
};
