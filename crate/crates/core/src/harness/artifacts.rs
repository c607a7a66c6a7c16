//! On-disk run artifacts and per-task checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic, write_json};
use crate::model::{Model, PROMPT_PARAM};
use crate::numerics::checkpoint::{load_params, save_params};
use crate::numerics::{ParamStore, Parameter};
use crate::roada::{FreezeSummary, PhaseRecord};

use super::experiment::ExperimentOutcome;

pub const CHECKPOINT_META: &str = "model.json";
pub const CHECKPOINT_FORMAT: u32 = 1;

/// Contents of `model.json` inside a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: u32,
    pub task: String,
    pub nodes: usize,
    pub prompt_trainable: bool,
    pub model: ModelConfig,
}

/// Writes `model.json`, `params/` and `prompt/` under `dir`.
pub fn save_checkpoint(dir: &Path, task: &str, nodes: usize, model: &Model, prompt: &Parameter) -> Result<()> {
    save_params(&dir.join("params"), &model.params)?;
    let mut p = ParamStore::new();
    p.insert(prompt.clone())?;
    save_params(&dir.join("prompt"), &p)?;
    write_json(
        &dir.join(CHECKPOINT_META),
        &CheckpointMeta {
            format: CHECKPOINT_FORMAT,
            task: task.to_string(),
            nodes,
            prompt_trainable: prompt.trainable,
            model: model.config.clone(),
        },
    )
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointMeta, Model, Parameter)> {
    let meta_path = dir.join(CHECKPOINT_META);
    let meta: CheckpointMeta = serde_json::from_str(&read_to_string(&meta_path)?)
        .map_err(|e| Error::format(&meta_path, e.to_string()))?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::format(&meta_path, format!("unsupported checkpoint format {}", meta.format)));
    }
    let model = Model::from_params(meta.model.clone(), load_params(&dir.join("params"))?)?;
    let prompts = load_params(&dir.join("prompt"))?;
    let mut prompt = prompts.get(PROMPT_PARAM)?.clone();
    if prompts.len() != 1 || prompt.shape() != model.prompt_shape(meta.nodes) {
        return Err(Error::format(
            dir.join("prompt"),
            format!("expected one `{PROMPT_PARAM}` of shape {:?}", model.prompt_shape(meta.nodes)),
        ));
    }
    prompt.trainable = meta.prompt_trainable;
    Ok((meta, model, prompt))
}

/// One entry of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: String,
    pub mode: String,
    pub ablation: Option<String>,
    pub seed: u64,
    pub mae: f64,
    pub mape: f64,
    pub horizon_mae: Vec<f64>,
    pub windows: usize,
    pub elements: usize,
    pub epochs: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary<'a> {
    mode: &'static str,
    ablation: Option<&'static str>,
    seed: u64,
    task_order: &'a [String],
    phases: Vec<&'a PhaseRecord>,
}

#[derive(Debug, Clone, Serialize)]
struct FreezeReportEntry<'a> {
    phase: usize,
    task: &'a str,
    threshold: f64,
    stable_fraction: f64,
    frozen_fraction: f64,
    parameters: Vec<FreezeSummary>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing<'a> {
    total_seconds: f64,
    tasks: Vec<(&'a str, f64)>,
}

pub fn metrics_records(outcome: &ExperimentOutcome, deterministic: bool) -> Vec<MetricsRecord> {
    outcome
        .tasks
        .iter()
        .map(|t| MetricsRecord {
            task: t.task.clone(),
            mode: outcome.mode.as_str().to_string(),
            ablation: outcome.ablation.map(|a| a.as_str().to_string()),
            seed: outcome.seed,
            mae: t.test.mae,
            mape: t.test.mape,
            horizon_mae: t.test.horizon_mae.clone(),
            windows: t.test.windows,
            elements: t.test.elements,
            epochs: t.epochs(),
            wall_seconds: if deterministic { 0.0 } else { t.wall_seconds },
        })
        .collect()
}

/// Every training epoch of every phase as CSV.
pub fn epoch_log_csv(outcome: &ExperimentOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("epoch log: {e}"));
    w.write_record(["phase", "kind", "task", "lr", "epoch", "train_loss", "val_mae", "improved"])
        .map_err(csv_err)?;
    let phases = outcome
        .warmup_phases
        .iter()
        .chain(outcome.tasks.iter().map(|t| &t.phase));
    for (i, p) in phases.enumerate() {
        let kind = serde_json::to_value(p.kind)?;
        let kind = kind.as_str().unwrap_or_default().to_string();
        for e in &p.epochs {
            w.write_record([
                i.to_string(),
                kind.clone(),
                p.task.clone(),
                p.lr.to_string(),
                e.epoch.to_string(),
                e.train_loss.map(|v| v.to_string()).unwrap_or_default(),
                e.val_mae.to_string(),
                e.improved.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("epoch log: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Writes metrics, logs, reports and one checkpoint per task into `dir`.
/// With `deterministic`, wall-clock values are kept out of `metrics.json`
/// and go to `timing.json` only.
pub fn write_outcome(dir: &Path, outcome: &ExperimentOutcome, nodes: &[usize], deterministic: bool) -> Result<()> {
    if nodes.len() != outcome.tasks.len() {
        return Err(Error::invalid("one node count per task is required"));
    }
    write_json(&dir.join("metrics.json"), &metrics_records(outcome, deterministic))?;
    write_atomic(&dir.join("epochlog.csv"), epoch_log_csv(outcome)?.as_bytes())?;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            total_seconds: outcome.wall_seconds,
            tasks: outcome.tasks.iter().map(|t| (t.task.as_str(), t.wall_seconds)).collect(),
        },
    )?;
    for (t, &n) in outcome.tasks.iter().zip(nodes) {
        save_checkpoint(&dir.join("checkpoints").join(&t.task), &t.task, n, &t.model, &t.prompt)?;
    }
    if outcome.freeze_reports.is_empty() {
        return Ok(());
    }
    let reports: Vec<_> = outcome
        .freeze_reports
        .iter()
        .zip(&outcome.warmup_phases[1..])
        .enumerate()
        .map(|(i, ((task, r), phase))| FreezeReportEntry {
            phase: i + 1,
            task,
            threshold: r.threshold,
            stable_fraction: r.stable_fraction(),
            frozen_fraction: phase.frozen_fraction,
            parameters: r.summaries(),
        })
        .collect();
    write_json(&dir.join("freeze_report.json"), &reports)?;
    let summary = RunSummary {
        mode: outcome.mode.as_str(),
        ablation: outcome.ablation.map(|a| a.as_str()),
        seed: outcome.seed,
        task_order: &outcome.task_order,
        phases: outcome
            .warmup_phases
            .iter()
            .chain(outcome.tasks.iter().map(|t| &t.phase))
            .collect(),
    };
    write_json(&dir.join("roada_run.json"), &summary)
}

/// Human-readable one-line-per-task summary.
pub fn summary_table(outcome: &ExperimentOutcome) -> String {
    let mut s = String::new();
    for t in &outcome.tasks {
        let _ = writeln!(s, "{:<24} MAE {:>12.6}  MAPE {:>10.6}  epochs {}", t.task, t.test.mae, t.test.mape, t.epochs());
    }
    let _ = writeln!(s, "{:<24} MAE {:>12.6}", "mean", outcome.mean_test_mae());
    s
}
