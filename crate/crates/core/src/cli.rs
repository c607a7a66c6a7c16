//! Command-line front end: argument parsing, run configuration files and
//! the subcommand implementations behind the `cmust` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ModelConfig, Profile};
use crate::data::{generate_synthetic, load_dataset, StDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_json};
use crate::harness::{
    evaluate, load_checkpoint, run_experiment, sparsity_transform, summary_table, write_outcome, Ablation,
    ExperimentConfig, Mode, Sparsity, TaskData, TrainConfig,
};
use crate::model::Batch;
use crate::roada::RoAdaConfig;

/// Environment variable naming the directory relative output paths live in.
pub const OUTPUT_ROOT_ENV: &str = "CMUST_OUTPUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::Format { .. } => EXIT_CONFIG,
        Error::Divergence(_) | Error::NonFinite(_) => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmust", version, about = "Multi-task spatiotemporal forecasting with rolling adaptation")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write coupled synthetic datasets.
    Gen(GenArgs),
    /// Train according to a JSON run configuration.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Dump attention scores of a checkpoint for one window.
    ExportAttention(ExportArgs),
    /// Grid over prompt width, head count and variance threshold.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub nodes: u64,
    #[arg(long, default_value_t = 1344, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    /// Minutes between steps; must divide a day.
    #[arg(long, default_value_t = 15)]
    pub interval: u32,
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration (JSON).
    pub config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Where to write the metrics JSON; stdout only if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Index into the test windows.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [18usize, 36, 72, 144])]
    pub d_p: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16])]
    pub heads: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-5, 1e-6, 1e-7])]
    pub delta: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Where the datasets of a run come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directories, one per task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<PathBuf>>,
    /// Generate the tasks instead of reading them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Applied to every task after loading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<Sparsity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Keep wall-clock times out of `metrics.json`.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn yes() -> bool {
    true
}

/// The JSON document given to `train` and `sweep`, before defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    #[serde(default = "tiny")]
    profile: Profile,
    mode: Mode,
    #[serde(default)]
    ablation: Option<Ablation>,
    #[serde(default)]
    seed: u64,
    data: DataConfig,
    #[serde(default)]
    model: Option<Value>,
    #[serde(default)]
    train: Option<Value>,
    #[serde(default)]
    roada: Option<Value>,
    output: OutputConfig,
}

fn tiny() -> Profile {
    Profile::Tiny
}

/// A run configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub mode: Mode,
    pub ablation: Option<Ablation>,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub roada: RoAdaConfig,
    pub output: OutputConfig,
}

/// Overlays the keys of `patch` onto `base`; unknown keys are rejected by
/// the target type.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&Value>, section: &str) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    if let Some(patch) = patch {
        let (Value::Object(target), Value::Object(p)) = (&mut value, patch) else {
            return Err(Error::Config(format!("`{section}` must be an object")));
        };
        for (k, v) in p {
            target.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{section}: {e}")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    /// Parses and fills defaults. Channel count and day length come from the
    /// data, so synthetic specs resolve them here; directory inputs resolve
    /// them in [`RunConfig::load_tasks`].
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawRunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let (channels, slots) = match &raw.data.synthetic {
            Some(s) if s.interval_minutes > 0 => (1, (1440 / s.interval_minutes) as usize),
            _ => (1, 1),
        };
        let model = overlay(&ModelConfig::for_profile(raw.profile, channels, slots), raw.model.as_ref(), "model")?;
        let train = overlay(&TrainConfig::for_profile(raw.profile), raw.train.as_ref(), "train")?;
        let roada = overlay(&RoAdaConfig::default(), raw.roada.as_ref(), "roada")?;
        let cfg = Self {
            profile: raw.profile,
            mode: raw.mode,
            ablation: raw.ablation,
            seed: raw.seed,
            data: raw.data,
            model,
            train,
            roada,
            output: raw.output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.paths, &self.data.synthetic) {
            (Some(p), None) if !p.is_empty() => {}
            (None, Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "data needs exactly one of a non-empty `paths` list or `synthetic`".into(),
                ))
            }
        }
        self.experiment().validate()
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            mode: self.mode,
            ablation: self.ablation,
            seed: self.seed,
            model: self.model.clone(),
            train: self.train.clone(),
            roada: self.roada.clone(),
        }
    }

    /// Output directory, resolved against the output-root variable when relative.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output(&self.output.dir)
    }

    /// Loads or generates the datasets, applies sparsity, and fixes the
    /// data-dependent model fields.
    pub fn load_tasks(&mut self) -> Result<Vec<TaskData>> {
        let datasets: Vec<StDataset> = match (&self.data.paths, &self.data.synthetic) {
            (Some(paths), _) => paths.iter().map(|p| load_dataset(p)).collect::<Result<_>>()?,
            (None, Some(spec)) => generate_synthetic(spec)?,
            (None, None) => return Err(Error::Config("no data configured".into())),
        };
        let datasets = match self.data.sparsity {
            Some(s) => datasets.iter().map(|d| sparsity_transform(d, s)).collect::<Result<_>>()?,
            None => datasets,
        };
        let first = &datasets[0].manifest;
        self.model.in_channels = first.channels;
        self.model.slots_per_day = first.slots_per_day();
        self.model.validate()?;
        datasets
            .into_iter()
            .map(|d| {
                TaskData::new(
                    d,
                    self.model.input_len,
                    self.model.horizon,
                    self.train.train_stride,
                    self.model.out_channels,
                )
            })
            .collect()
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<Vec<PathBuf>> {
    let spec = SyntheticSpec {
        seed: args.seed,
        tasks: args.tasks as usize,
        nodes: args.nodes as usize,
        steps: args.steps as usize,
        interval_minutes: args.interval,
        coupling: args.coupling,
        noise_sd: args.noise,
    };
    let out = resolve_output(&args.out);
    let mut dirs = Vec::new();
    for d in generate_synthetic(&spec)? {
        let dir = out.join(&d.manifest.name);
        d.save(&dir)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Runs one configured experiment and writes every artifact.
pub fn run_config(mut cfg: RunConfig, out: &Path) -> Result<crate::harness::ExperimentOutcome> {
    let tasks = cfg.load_tasks()?;
    write_json(&out.join("resolved_config.json"), &cfg)?;
    let outcome = run_experiment(&tasks, &cfg.experiment(), &mut |_, _, _, _| Ok(()))?;
    let nodes: Vec<usize> = tasks.iter().map(TaskData::nodes).collect();
    write_outcome(out, &outcome, &nodes, cfg.output.deterministic)?;
    Ok(outcome)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(o) = &args.output {
        cfg.output.dir = o.clone();
    }
    let out = cfg.output_dir();
    let outcome = run_config(cfg, &out)?;
    print!("{}", summary_table(&outcome));
    println!("artifacts in {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub task: String,
    pub dataset: String,
    pub mae: f64,
    pub mape: f64,
    pub horizon_mae: Vec<f64>,
    pub windows: usize,
    pub elements: usize,
}

fn checkpoint_task(checkpoint: &Path, dataset: &Path) -> Result<(crate::model::Model, crate::numerics::Parameter, TaskData, String)> {
    let (meta, model, prompt) = load_checkpoint(checkpoint)?;
    let d = load_dataset(dataset)?;
    let m = &d.manifest;
    if m.nodes != meta.nodes || m.channels != model.config.in_channels || m.slots_per_day() != model.config.slots_per_day {
        return Err(Error::Config(format!(
            "checkpoint expects {} nodes, {} channels, {} slots per day; dataset has {}, {}, {}",
            meta.nodes,
            model.config.in_channels,
            model.config.slots_per_day,
            m.nodes,
            m.channels,
            m.slots_per_day()
        )));
    }
    let task = TaskData::new(d, model.config.input_len, model.config.horizon, 1, model.config.out_channels)?;
    Ok((model, prompt, task, meta.task))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutput> {
    if args.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let (model, prompt, task, name) = checkpoint_task(&args.checkpoint, &args.dataset)?;
    let r = evaluate(&model, &prompt.value, &task, &task.split.test, args.batch_size)?;
    let out = EvalOutput {
        task: name,
        dataset: task.name().to_string(),
        mae: r.mae,
        mape: r.mape,
        horizon_mae: r.horizon_mae,
        windows: r.windows,
        elements: r.elements,
    };
    if let Some(path) = &args.out {
        write_json(&resolve_output(path), &out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub block: usize,
    pub stage: String,
    pub axis: String,
    pub head: usize,
    /// `[contexts][L][L]`.
    pub scores: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionFile {
    pub task: String,
    pub window: usize,
    pub start: usize,
    pub maps: Vec<AttentionExport>,
}

pub fn cmd_export_attention(args: &ExportArgs) -> Result<AttentionFile> {
    let (model, prompt, task, name) = checkpoint_task(&args.checkpoint, &args.dataset)?;
    let start = *task.split.test.get(args.window).ok_or_else(|| {
        Error::invalid(format!(
            "window {} out of range; the test split has {}",
            args.window,
            task.split.test.len()
        ))
    })?;
    let batch: Batch = task.batch(&[start])?;
    let (_, maps) = model.predict_with_attention(&prompt.value, &batch)?;
    let maps = maps
        .into_iter()
        .map(|m| {
            let s = m.scores.shape();
            let (contexts, l) = (s[1], s[2]);
            let scores = m
                .scores
                .data()
                .chunks_exact(l * l)
                .take(contexts)
                .map(|c| c.chunks_exact(l).map(<[f64]>::to_vec).collect())
                .collect();
            AttentionExport {
                block: m.block,
                stage: m.stage.name().to_string(),
                axis: format!("{:?}", m.axis()).to_lowercase(),
                head: m.head,
                scores,
            }
        })
        .collect();
    let file = AttentionFile {
        task: name,
        window: args.window,
        start,
        maps,
    };
    write_json(&resolve_output(&args.out), &file)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d_p: usize,
    pub heads: usize,
    pub variance_threshold: f64,
    pub dir: String,
    pub mean_mae: f64,
    pub task_mae: Vec<f64>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepPoint>> {
    let base = RunConfig::from_file(&args.config)?;
    let root = resolve_output(args.output.as_ref().unwrap_or(&base.output.dir));
    let mut points = Vec::new();
    for &d_p in &args.d_p {
        for &heads in &args.heads {
            for &delta in &args.delta {
                let mut cfg = base.clone();
                cfg.model.d_p = d_p;
                cfg.model.heads = heads;
                cfg.roada.variance_threshold = delta;
                if let Err(e) = cfg.validate() {
                    log::warn!("skipping d_p={d_p} heads={heads} delta={delta:e}: {e}");
                    continue;
                }
                let name = format!("dp{d_p}_h{heads}_delta{delta:e}");
                let outcome = run_config(cfg, &root.join(&name))?;
                let task_mae: Vec<f64> = outcome.tasks.iter().map(|t| t.test.mae).collect();
                println!("{name}: mean MAE {:.6}", outcome.mean_test_mae());
                points.push(SweepPoint {
                    d_p,
                    heads,
                    variance_threshold: delta,
                    dir: name,
                    mean_mae: outcome.mean_test_mae(),
                    task_mae,
                });
                write_json(&root.join("sweep.json"), &points)?;
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Config("no valid sweep point".into()));
    }
    Ok(points)
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|dirs| {
            for d in dirs {
                println!("{}", d.display());
            }
        }),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a).and_then(|o| {
            println!("{}", serde_json::to_string_pretty(&o)?);
            Ok(())
        }),
        Command::ExportAttention(a) => cmd_export_attention(a).map(|f| {
            println!("{} attention maps written", f.maps.len());
        }),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
