use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, ModelConfig};
use crate::data::{DatasetManifest, StDataset};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{Parameter, Tensor};
use crate::roada::{
    roada_full, shared_model_config, task_prompts, FreezeReport, PhaseContext, PhaseKind, PhaseObserver, PhaseRecord,
    PromptSource, RoAdaConfig, TaskPromptArtifact,
};

use super::eval::{evaluate, EvalReport};
use super::task::TaskData;
use super::train::{train_until_convergence, Phase, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Roada,
    Ablation,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "roada" => Ok(Mode::Roada),
            "ablation" => Ok(Mode::Ablation),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Roada => "roada",
            Mode::Ablation => "ablation",
        }
    }
}

/// Component removed in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// No cross-interactions between context slices and observations.
    NoInteraction,
    /// Warm-up still runs, but nothing is frozen.
    NoFreeze,
    /// Prompts are zeros and never trained.
    NoPrompt,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::NoInteraction => "no_interaction",
            Ablation::NoFreeze => "no_freeze",
            Ablation::NoPrompt => "no_prompt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub ablation: Option<Ablation>,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub roada: RoAdaConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.mode, self.ablation) {
            (Mode::Ablation, None) => Err(Error::Config("ablation mode needs an `ablation` choice".into())),
            (Mode::Single | Mode::Roada, Some(a)) => Err(Error::Config(format!(
                "ablation `{}` given for mode `{}`",
                a.as_str(),
                self.mode.as_str()
            ))),
            _ => {
                self.train.validate()?;
                self.roada.validate()
            }
        }
    }

    /// Model, rolling and prompt settings after applying the ablation.
    pub fn effective(&self) -> (ModelConfig, RoAdaConfig, PromptSource) {
        let mut model = self.model.clone();
        let mut roada = self.roada.clone();
        let mut prompts = PromptSource::Autoencoder;
        match self.ablation {
            Some(Ablation::NoInteraction) => model.cross_interaction = false,
            Some(Ablation::NoFreeze) => roada.freeze = false,
            Some(Ablation::NoPrompt) => prompts = PromptSource::Zeros,
            None => {}
        }
        (model, roada, prompts)
    }
}

#[derive(Debug, Clone)]
pub struct TaskRun {
    pub task: String,
    pub model: Model,
    pub prompt: Parameter,
    /// Final training phase of this task (refinement or single-task run).
    pub phase: PhaseRecord,
    pub test: EvalReport,
    pub wall_seconds: f64,
}

impl TaskRun {
    pub fn epochs(&self) -> usize {
        self.phase.epochs_trained
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub mode: Mode,
    pub ablation: Option<Ablation>,
    pub seed: u64,
    pub task_order: Vec<String>,
    pub tasks: Vec<TaskRun>,
    /// Warm-up phases, empty in single mode.
    pub warmup_phases: Vec<PhaseRecord>,
    /// One report per rolling phase, keyed by task name.
    pub freeze_reports: Vec<(String, FreezeReport)>,
    pub prompt_artifacts: Vec<TaskPromptArtifact>,
    pub wall_seconds: f64,
}

impl ExperimentOutcome {
    pub fn mean_test_mae(&self) -> f64 {
        self.tasks.iter().map(|t| t.test.mae).sum::<f64>() / self.tasks.len() as f64
    }
}

/// Runs one experiment over `tasks`. `observer` sees every epoch of every
/// training phase.
pub fn run_experiment(
    tasks: &[TaskData],
    cfg: &ExperimentConfig,
    observer: &mut PhaseObserver<'_>,
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let (model_cfg, roada_cfg, prompt_source) = cfg.effective();
    match cfg.mode {
        Mode::Single => {
            let model_cfg = shared_model_config(tasks, &model_cfg)?;
            let (prompts, artifacts) =
                task_prompts(tasks, &model_cfg, &roada_cfg.autoencoder, prompt_source, cfg.seed)?;
            let mut runs = Vec::with_capacity(tasks.len());
            for (k, (task, prompt)) in tasks.iter().zip(prompts).enumerate() {
                let t0 = Instant::now();
                let mut model = Model::new(model_cfg.clone(), derive_seed(cfg.seed, "init"))?;
                let mut prompt = prompt;
                let seed = derive_seed(cfg.seed, &format!("single{k}"));
                let ctx = PhaseContext {
                    index: k,
                    kind: PhaseKind::Single,
                    task: k,
                };
                let outcome = train_until_convergence(
                    &mut model,
                    &mut prompt,
                    task,
                    &cfg.train,
                    Phase {
                        lr: cfg.train.lr,
                        max_epochs: cfg.train.max_epochs,
                        seed,
                    },
                    &mut |rec, m, p| observer(&ctx, rec, m, p),
                )?;
                let test = evaluate(&model, &prompt.value, task, &task.split.test, cfg.train.batch_size)?;
                log::info!("{} single: test MAE {:.6}", task.name(), test.mae);
                runs.push(TaskRun {
                    task: task.name().to_string(),
                    phase: PhaseRecord {
                        kind: PhaseKind::Single,
                        task: task.name().to_string(),
                        lr: cfg.train.lr,
                        seed,
                        max_epochs: cfg.train.max_epochs,
                        epochs_trained: outcome.epochs_trained(),
                        best_epoch: outcome.best_epoch,
                        best_val_mae: outcome.best_val_mae,
                        snapshots: None,
                        frozen_fraction: 0.0,
                        epochs: outcome.epochs,
                    },
                    model,
                    prompt,
                    test,
                    wall_seconds: t0.elapsed().as_secs_f64(),
                });
            }
            Ok(ExperimentOutcome {
                mode: cfg.mode,
                ablation: None,
                seed: cfg.seed,
                task_order: tasks.iter().map(|t| t.name().to_string()).collect(),
                tasks: runs,
                warmup_phases: Vec::new(),
                freeze_reports: Vec::new(),
                prompt_artifacts: artifacts,
                wall_seconds: started.elapsed().as_secs_f64(),
            })
        }
        Mode::Roada | Mode::Ablation => {
            let order = roada_cfg.order(tasks.len())?;
            let out = roada_full(tasks, &model_cfg, &cfg.train, &roada_cfg, prompt_source, cfg.seed, observer)?;
            let wall = started.elapsed().as_secs_f64();
            let per_task = wall / tasks.len() as f64;
            Ok(ExperimentOutcome {
                mode: cfg.mode,
                ablation: cfg.ablation,
                seed: cfg.seed,
                task_order: order.iter().map(|&i| tasks[i].name().to_string()).collect(),
                tasks: out
                    .tasks
                    .into_iter()
                    .map(|r| TaskRun {
                        task: r.task,
                        model: r.model,
                        prompt: r.prompt,
                        phase: r.phase,
                        test: r.test,
                        wall_seconds: per_task,
                    })
                    .collect(),
                warmup_phases: out.warmup.phases,
                freeze_reports: out.warmup.reports,
                prompt_artifacts: out.artifacts,
                wall_seconds: wall,
            })
        }
    }
}

/// Reduces a dataset's spatial or temporal density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// Keep a seeded random fraction of nodes, in their original order.
    Nodes { fraction: f64, seed: u64 },
    /// Average each run of `multiplier` consecutive steps.
    Interval { multiplier: usize },
}

pub fn sparsity_transform(dataset: &StDataset, how: Sparsity) -> Result<StDataset> {
    let m = &dataset.manifest;
    let (n, c) = (m.nodes, m.channels);
    let obs = dataset.observations.data();
    match how {
        Sparsity::Nodes { fraction, seed } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::invalid(format!("node fraction {fraction} outside (0, 1]")));
            }
            let keep_n = ((n as f64 * fraction).round() as usize).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample(&mut rng, n, keep_n).into_vec();
            keep.sort_unstable();
            let mut data = Vec::with_capacity(m.t_all * keep_n * c);
            for t in 0..m.t_all {
                for &node in &keep {
                    let o = (t * n + node) * c;
                    data.extend_from_slice(&obs[o..o + c]);
                }
            }
            let manifest = DatasetManifest {
                nodes: keep_n,
                coords: keep.iter().map(|&i| m.coords[i]).collect(),
                ..m.clone()
            };
            StDataset::new(manifest, Tensor::new(vec![m.t_all, keep_n, c], data)?)
        }
        Sparsity::Interval { multiplier } => {
            if multiplier == 0 {
                return Err(Error::invalid("interval multiplier must be positive"));
            }
            let t_new = m.t_all / multiplier;
            if t_new == 0 {
                return Err(Error::invalid(format!(
                    "multiplier {multiplier} exceeds {} steps",
                    m.t_all
                )));
            }
            let interval = m.interval_minutes as usize * multiplier;
            if 1440 % interval != 0 {
                return Err(Error::invalid(format!(
                    "expanded interval of {interval} minutes does not divide a day"
                )));
            }
            let dropped = m.t_all % multiplier;
            if dropped > 0 {
                log::warn!("{}: dropping {dropped} trailing steps", m.name);
            }
            let row = n * c;
            let mut data = vec![0.0; t_new * row];
            for (t, out) in data.chunks_exact_mut(row).enumerate() {
                for k in 0..multiplier {
                    let src = &obs[(t * multiplier + k) * row..][..row];
                    for (o, v) in out.iter_mut().zip(src) {
                        *o += v;
                    }
                }
                for o in out.iter_mut() {
                    *o /= multiplier as f64;
                }
            }
            let manifest = DatasetManifest {
                t_all: t_new,
                interval_minutes: interval as u32,
                ..m.clone()
            };
            StDataset::new(manifest, Tensor::new(vec![t_new, n, c], data)?)
        }
    }
}
