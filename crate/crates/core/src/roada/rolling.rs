use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, ModelConfig, PromptMode};
use crate::error::{Error, Result};
use crate::harness::{evaluate, train_until_convergence, EpochRecord, EvalReport, Phase, TaskData, TrainConfig};
use crate::model::{prompt_shape, Model, PROMPT_PARAM};
use crate::numerics::{Parameter, Tensor};

use super::freeze::{apply_freeze, variance_partition, FreezeMode, FreezeReport, SnapshotHistory};
use super::prompt::{build_prompt, daily_average_sample, train_autoencoder, AutoencoderConfig, TaskPromptArtifact};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoAdaConfig {
    /// Stability threshold on snapshot variance.
    pub variance_threshold: f64,
    /// Learning-rate multiplier for rolling phases.
    pub rolling_lr_factor: f64,
    /// Epoch cap for the first task's warm-up.
    pub max_epochs_warmup: usize,
    /// Epoch cap for each rolling phase; defaults to `max_epochs_warmup`.
    pub max_epochs_rolling: Option<usize>,
    pub max_epochs_refine: usize,
    /// Indices into the task list; defaults to the given order.
    pub task_order: Option<Vec<usize>>,
    pub freeze_mode: FreezeMode,
    /// Apply stable masks at all. Disabling keeps every weight dynamic.
    pub freeze: bool,
    /// Keep warm-up masks during refinement.
    pub refine_keep_frozen: bool,
    pub autoencoder: AutoencoderConfig,
}

impl Default for RoAdaConfig {
    fn default() -> Self {
        Self {
            variance_threshold: 1e-6,
            rolling_lr_factor: 0.01,
            max_epochs_warmup: 100,
            max_epochs_rolling: None,
            max_epochs_refine: 100,
            task_order: None,
            freeze_mode: FreezeMode::Element,
            freeze: true,
            refine_keep_frozen: true,
            autoencoder: AutoencoderConfig::default(),
        }
    }
}

impl RoAdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_threshold > 0.0) {
            return Err(Error::Config("variance_threshold must be positive".into()));
        }
        if !(self.rolling_lr_factor > 0.0 && self.rolling_lr_factor <= 1.0) {
            return Err(Error::Config("rolling_lr_factor must lie in (0, 1]".into()));
        }
        if self.max_epochs_warmup == 0 || self.rolling_epochs() == 0 || self.max_epochs_refine == 0 {
            return Err(Error::Config("epoch caps must be positive".into()));
        }
        Ok(())
    }

    pub fn rolling_epochs(&self) -> usize {
        self.max_epochs_rolling.unwrap_or(self.max_epochs_warmup)
    }

    /// The task visiting order for `k` tasks.
    pub fn order(&self, k: usize) -> Result<Vec<usize>> {
        let order = self.task_order.clone().unwrap_or_else(|| (0..k).collect());
        let mut seen = vec![false; k];
        for &i in &order {
            if i >= k || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!(
                    "task_order {order:?} is not a permutation of 0..{k}"
                )));
            }
        }
        if order.len() != k || k == 0 {
            return Err(Error::Config(format!(
                "task_order must list each of the {k} tasks once"
            )));
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Warmup,
    Rolling,
    Revisit,
    Refine,
    Single,
}

/// One training call and what came out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub kind: PhaseKind,
    pub task: String,
    pub lr: f64,
    pub seed: u64,
    pub max_epochs: usize,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    /// Snapshots the variance was taken over (rolling phases only).
    pub snapshots: Option<usize>,
    /// Overall frozen fraction after this phase.
    pub frozen_fraction: f64,
    #[serde(skip)]
    pub epochs: Vec<EpochRecord>,
}

/// Where an epoch-end callback was fired from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseContext {
    pub index: usize,
    pub kind: PhaseKind,
    pub task: usize,
}

pub type PhaseObserver<'a> = dyn FnMut(&PhaseContext, &EpochRecord, &Model, &Parameter) -> Result<()> + 'a;

pub fn frozen_fraction(model: &Model) -> f64 {
    let total = model.params.element_count();
    let frozen: usize = model.params.iter().map(|p| p.frozen_count()).sum();
    frozen as f64 / total as f64
}

/// Result of the rolling warm-up: the shared weights `W*` (with their
/// accumulated masks), the per-task prompts and one report per rolling phase.
#[derive(Debug, Clone)]
pub struct WarmupOutcome {
    pub model: Model,
    pub prompts: Vec<Parameter>,
    pub reports: Vec<(String, FreezeReport)>,
    pub phases: Vec<PhaseRecord>,
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    model: &mut Model,
    prompt: &mut Parameter,
    task: &TaskData,
    train: &TrainConfig,
    ctx: PhaseContext,
    lr: f64,
    max_epochs: usize,
    seed: u64,
    history: Option<&mut SnapshotHistory>,
    observer: &mut PhaseObserver<'_>,
) -> Result<PhaseRecord> {
    let mut history = history;
    let outcome = train_until_convergence(
        model,
        prompt,
        task,
        train,
        Phase { lr, max_epochs, seed },
        &mut |rec, m, p| {
            if let Some(h) = history.as_deref_mut() {
                h.record(&m.params)?;
            }
            observer(&ctx, rec, m, p)
        },
    )?;
    Ok(PhaseRecord {
        kind: ctx.kind,
        task: task.name().to_string(),
        lr,
        seed,
        max_epochs,
        epochs_trained: outcome.epochs_trained(),
        best_epoch: outcome.best_epoch,
        best_val_mae: outcome.best_val_mae,
        snapshots: history.map(|h| h.len()),
        frozen_fraction: frozen_fraction(model),
        epochs: outcome.epochs,
    })
}

/// Warm-up over all tasks: the first task trains at the base rate; every
/// later task, then the first task again, trains at the rolling rate while
/// epoch-end snapshots are collected, after which low-variance elements are
/// frozen and the history restarts from the phase's final weights.
pub fn warmup_rolling(
    tasks: &[TaskData],
    model: Model,
    prompts: Vec<Parameter>,
    train: &TrainConfig,
    cfg: &RoAdaConfig,
    seed: u64,
    observer: &mut PhaseObserver<'_>,
) -> Result<WarmupOutcome> {
    cfg.validate()?;
    if prompts.len() != tasks.len() {
        return Err(Error::invalid(format!(
            "{} prompts for {} tasks",
            prompts.len(),
            tasks.len()
        )));
    }
    let order = cfg.order(tasks.len())?;
    let mut model = model;
    let mut prompts = prompts;
    let mut phases = Vec::new();
    let mut reports = Vec::new();
    let mut history = SnapshotHistory::new();
    let rolling_lr = train.lr * cfg.rolling_lr_factor;

    let first = order[0];
    let ctx = PhaseContext {
        index: 0,
        kind: PhaseKind::Warmup,
        task: first,
    };
    phases.push(run_phase(
        &mut model,
        &mut prompts[first],
        &tasks[first],
        train,
        ctx,
        train.lr,
        cfg.max_epochs_warmup,
        derive_seed(seed, "phase0"),
        None,
        observer,
    )?);
    history.reset(&model.params);

    let rolling = order[1..]
        .iter()
        .map(|&t| (t, PhaseKind::Rolling))
        .chain(std::iter::once((first, PhaseKind::Revisit)));
    for (i, (t, kind)) in rolling.enumerate() {
        let index = i + 1;
        let ctx = PhaseContext { index, kind, task: t };
        let mut record = run_phase(
            &mut model,
            &mut prompts[t],
            &tasks[t],
            train,
            ctx,
            rolling_lr,
            cfg.rolling_epochs(),
            derive_seed(seed, &format!("phase{index}")),
            Some(&mut history),
            observer,
        )?;
        let mut report = variance_partition(&history, cfg.variance_threshold)?;
        if cfg.freeze_mode == FreezeMode::PerTensor {
            report = report.per_tensor();
        }
        if cfg.freeze {
            apply_freeze(&mut model.params, &report)?;
        }
        record.frozen_fraction = frozen_fraction(&model);
        log::info!(
            "{} {}: stable {:.4}, frozen {:.4}",
            tasks[t].name(),
            if kind == PhaseKind::Revisit { "revisit" } else { "rolling" },
            report.stable_fraction(),
            record.frozen_fraction
        );
        reports.push((tasks[t].name().to_string(), report));
        phases.push(record);
        history.reset(&model.params);
    }
    Ok(WarmupOutcome {
        model,
        prompts,
        reports,
        phases,
    })
}

/// Fine-tunes a copy of `w_star` on one task at the base rate. With
/// `refine_keep_frozen` the warm-up masks stay in force.
pub fn refine(
    task: &TaskData,
    task_index: usize,
    w_star: &Model,
    prompt: Parameter,
    train: &TrainConfig,
    cfg: &RoAdaConfig,
    seed: u64,
    observer: &mut PhaseObserver<'_>,
) -> Result<(Model, Parameter, PhaseRecord)> {
    let mut model = w_star.clone();
    if !cfg.refine_keep_frozen {
        for p in model.params.iter_mut() {
            let n = p.value.len();
            p.set_freeze_mask(vec![false; n])?;
        }
    }
    let mut prompt = prompt;
    let ctx = PhaseContext {
        index: usize::MAX,
        kind: PhaseKind::Refine,
        task: task_index,
    };
    let record = run_phase(
        &mut model,
        &mut prompt,
        task,
        train,
        ctx,
        train.lr,
        cfg.max_epochs_refine,
        seed,
        None,
        observer,
    )?;
    Ok((model, prompt, record))
}

/// How task prompts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    /// Autoencoder summary projected to prompt width; trainable.
    Autoencoder,
    /// Zeros, never updated.
    Zeros,
}

/// Builds one prompt parameter per task.
pub fn task_prompts(
    tasks: &[TaskData],
    config: &ModelConfig,
    ae: &AutoencoderConfig,
    source: PromptSource,
    seed: u64,
) -> Result<(Vec<Parameter>, Vec<TaskPromptArtifact>)> {
    let mut prompts = Vec::with_capacity(tasks.len());
    let mut artifacts = Vec::new();
    for task in tasks {
        let shape = prompt_shape(config, task.nodes());
        let param = match source {
            PromptSource::Zeros => {
                let mut p = Parameter::new(PROMPT_PARAM, Tensor::zeros(&shape));
                p.trainable = false;
                p
            }
            PromptSource::Autoencoder => {
                let sample = daily_average_sample(&task.dataset)?;
                let art = train_autoencoder(task.name(), &sample, ae, derive_seed(seed, "autoencoder"))?;
                let per_node = build_prompt(&art.latent, config.d_p, derive_seed(seed, "projection"))?;
                artifacts.push(art);
                let value = match config.prompt_mode {
                    PromptMode::PerNode => per_node,
                    PromptMode::Global => {
                        let n = per_node.shape()[0] as f64;
                        let mut mean = vec![0.0; config.d_p];
                        for row in per_node.data().chunks_exact(config.d_p) {
                            for (m, v) in mean.iter_mut().zip(row) {
                                *m += v / n;
                            }
                        }
                        Tensor::new(vec![1, config.d_p], mean)?
                    }
                };
                Parameter::new(PROMPT_PARAM, value)
            }
        };
        prompts.push(param);
    }
    Ok((prompts, artifacts))
}

/// Refined model, prompt and test metrics of one task.
#[derive(Debug, Clone)]
pub struct TaskResult {
    pub task: String,
    pub model: Model,
    pub prompt: Parameter,
    pub phase: PhaseRecord,
    pub test: EvalReport,
}

#[derive(Debug, Clone)]
pub struct RoadaOutcome {
    pub warmup: WarmupOutcome,
    pub tasks: Vec<TaskResult>,
    pub artifacts: Vec<TaskPromptArtifact>,
}

/// Checks that every task can share one network.
pub fn shared_model_config(tasks: &[TaskData], base: &ModelConfig) -> Result<ModelConfig> {
    let first = tasks.first().ok_or_else(|| Error::invalid("no tasks"))?;
    for t in tasks {
        if t.channels() != first.channels()
            || t.slots_per_day() != first.slots_per_day()
            || t.input_len() != first.input_len()
            || t.horizon() != first.horizon()
            || t.out_channels() != first.out_channels()
        {
            return Err(Error::Config(format!(
                "task `{}` differs from `{}` in channels, interval or window lengths",
                t.name(),
                first.name()
            )));
        }
    }
    let mut c = base.clone();
    c.in_channels = first.channels();
    c.out_channels = first.out_channels();
    c.slots_per_day = first.slots_per_day();
    c.input_len = first.input_len();
    c.horizon = first.horizon();
    c.validate()?;
    Ok(c)
}

/// Prompts, warm-up, per-task refinement, and test evaluation.
pub fn roada_full(
    tasks: &[TaskData],
    config: &ModelConfig,
    train: &TrainConfig,
    cfg: &RoAdaConfig,
    prompt_source: PromptSource,
    seed: u64,
    observer: &mut PhaseObserver<'_>,
) -> Result<RoadaOutcome> {
    train.validate()?;
    cfg.validate()?;
    let config = shared_model_config(tasks, config)?;
    let model = Model::new(config.clone(), derive_seed(seed, "init"))?;
    let (prompts, artifacts) = task_prompts(tasks, &config, &cfg.autoencoder, prompt_source, seed)?;
    let warmup = warmup_rolling(tasks, model, prompts, train, cfg, seed, observer)?;
    let mut results = Vec::with_capacity(tasks.len());
    for (k, task) in tasks.iter().enumerate() {
        let (model, prompt, phase) = refine(
            task,
            k,
            &warmup.model,
            warmup.prompts[k].clone(),
            train,
            cfg,
            derive_seed(seed, &format!("refine{k}")),
            observer,
        )?;
        let test = evaluate(&model, &prompt.value, task, &task.split.test, train.batch_size)?;
        log::info!("{}: test MAE {:.6} MAPE {:.6}", task.name(), test.mae, test.mape);
        results.push(TaskResult {
            task: task.name().to_string(),
            model,
            prompt,
            phase,
            test,
        });
    }
    Ok(RoadaOutcome {
        warmup,
        tasks: results,
        artifacts,
    })
}
