//! Parameter layout, seeded initialization and the end-to-end forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::ModelConfig;
use crate::embedding::{assemble_representation, embed_observations, embed_spatial, embed_temporal};
use crate::error::{Error, Result};
use crate::msti::{fuse_and_predict, interact, AttentionMap, MapSink, Stage};
use crate::numerics::{Binding, Graph, ParamStore, Parameter, Tensor, Var};

/// Name of the prompt parameter when it is bound alongside model weights.
pub const PROMPT_PARAM: &str = "prompt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-bound, bound)`.
    Uniform(f64),
    /// `N(0, sd²)`.
    Normal(f64),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn linear_specs(out: &mut Vec<ParamSpec>, prefix: &str, w: &str, b: Option<&str>, fan_in: usize, fan_out: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    out.push(ParamSpec {
        name: format!("{prefix}/{w}"),
        shape: vec![fan_in, fan_out],
        init: Init::Uniform(bound),
    });
    if let Some(b) = b {
        out.push(ParamSpec {
            name: format!("{prefix}/{b}"),
            shape: vec![fan_out],
            init: Init::Uniform(bound),
        });
    }
}

fn vector(out: &mut Vec<ParamSpec>, name: String, len: usize, value: f64) {
    out.push(ParamSpec {
        name,
        shape: vec![len],
        init: Init::Constant(value),
    });
}

fn attention_specs(out: &mut Vec<ParamSpec>, prefix: &str, q_width: usize, kv_width: usize, width: usize, hidden: usize) {
    linear_specs(out, prefix, "wq", None, q_width, width);
    linear_specs(out, prefix, "wk", None, kv_width, width);
    linear_specs(out, prefix, "wv", None, kv_width, width);
    linear_specs(out, prefix, "wo", None, width, kv_width);
    vector(out, format!("{prefix}/ln1_g"), kv_width, 1.0);
    vector(out, format!("{prefix}/ln1_b"), kv_width, 0.0);
    linear_specs(out, prefix, "ffn_w1", Some("ffn_b1"), kv_width, hidden);
    linear_specs(out, prefix, "ffn_w2", Some("ffn_b2"), hidden, kv_width);
    vector(out, format!("{prefix}/ln2_g"), kv_width, 1.0);
    vector(out, format!("{prefix}/ln2_b"), kv_width, 0.0);
}

/// Every trainable tensor of the network in initialization order. Stages the
/// configuration disables have no parameters.
pub fn param_specs(c: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    linear_specs(&mut out, "embed/obs", "w1", Some("b1"), c.in_channels, c.h_obs);
    linear_specs(&mut out, "embed/obs", "w2", Some("b2"), c.h_obs, c.d_obs);
    linear_specs(&mut out, "embed/spatial", "w", Some("b"), 2, c.d_s);
    linear_specs(&mut out, "embed/temporal", "ts_w", Some("ts_b"), 6, c.temporal_sub);
    for (name, rows) in [("dow", 7), ("tod", c.slots_per_day)] {
        out.push(ParamSpec {
            name: format!("embed/temporal/{name}"),
            shape: vec![rows, c.temporal_sub],
            init: Init::Normal(1.0),
        });
    }
    linear_specs(&mut out, "embed/temporal", "w", Some("b"), 3 * c.temporal_sub, c.d_t);

    let layout = c.layout();
    for block in 0..c.blocks {
        for stage in Stage::active(c) {
            let prefix = format!("msti/block{block}/{}", stage.name());
            match stage.cross_segments() {
                Some((q, kv)) => attention_specs(
                    &mut out,
                    &prefix,
                    layout.width(q),
                    layout.width(kv),
                    c.d_cross,
                    c.ffn_hidden,
                ),
                None => attention_specs(&mut out, &prefix, c.d_h(), c.d_h(), c.d_self, c.ffn_hidden),
            }
        }
    }

    linear_specs(&mut out, "head", "w_o", None, c.d_obs, c.d_f);
    linear_specs(&mut out, "head", "w_s", None, c.d_s, c.d_f);
    linear_specs(&mut out, "head", "w_t", None, c.d_t, c.d_f);
    linear_specs(&mut out, "head", "w_z", None, c.d_f, c.d_y);
    linear_specs(&mut out, "head", "w_p", None, c.d_p, c.d_y);
    linear_specs(
        &mut out,
        "head",
        "fc_w",
        Some("fc_b"),
        c.input_len * c.d_y,
        c.horizon * c.out_channels,
    );
    out
}

/// Draws every parameter from one ChaCha8 stream seeded with `seed`.
pub fn init_params(c: &ModelConfig, seed: u64) -> Result<ParamStore> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in param_specs(c) {
        let value = Tensor::from_fn(&spec.shape, |_| match spec.init {
            Init::Uniform(b) => rng.gen_range(-b..b),
            Init::Normal(sd) => sd * rng.sample::<f64, _>(StandardNormal),
            Init::Constant(v) => v,
        });
        store.insert(Parameter::new(spec.name, value))?;
    }
    Ok(store)
}

/// Checks that `store` holds exactly the tensors `c` requires, in order.
pub fn check_params(c: &ModelConfig, store: &ParamStore) -> Result<()> {
    let specs = param_specs(c);
    if specs.len() != store.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} tensors, configuration needs {}",
            store.len(),
            specs.len()
        )));
    }
    for (spec, p) in specs.iter().zip(store.iter()) {
        if spec.name != p.name() || spec.shape != p.shape() {
            return Err(Error::Config(format!(
                "checkpoint tensor `{}` {:?} does not match expected `{}` {:?}",
                p.name(),
                p.shape(),
                spec.name,
                spec.shape
            )));
        }
    }
    Ok(())
}

/// One mini-batch of normalized windows and their calendar features.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B, T, N, C]`.
    pub x: Tensor,
    /// `[B, T', N, C_out]`.
    pub y: Tensor,
    /// `B·T` time-of-day slots.
    pub tod: Vec<usize>,
    /// `B·T` weekdays.
    pub dow: Vec<usize>,
    /// `[B, T, 6]`.
    pub ts: Tensor,
    /// `[N, 2]`, normalized.
    pub coords: Tensor,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.x.shape()[0]
    }
}

/// Builds the prediction node `[B, T', N, C_out]`. When `sink` is given, the
/// softmax node of every head of every stage is recorded in it.
pub fn msti_forward(
    g: &mut Graph,
    c: &ModelConfig,
    params: &Binding,
    prompt: Var,
    batch: &Batch,
    sink: Option<&mut MapSink>,
) -> Result<Var> {
    let xs = batch.x.shape();
    if xs.len() != 4 || xs[1] != c.input_len || xs[3] != c.in_channels {
        return Err(Error::shape(format!(
            "input must be [B, {}, N, {}], got {xs:?}",
            c.input_len, c.in_channels
        )));
    }
    let x = g.constant(batch.x.clone());
    let coords = g.constant(batch.coords.clone());
    let ts = g.constant(batch.ts.clone());
    if let Some(&bad) = batch.tod.iter().find(|&&s| s >= c.slots_per_day) {
        return Err(Error::invalid(format!(
            "time-of-day slot {bad} outside 0..{}",
            c.slots_per_day
        )));
    }
    let e_obs = embed_observations(g, params, x)?;
    let e_s = embed_spatial(g, params, coords)?;
    let e_t = embed_temporal(g, params, &batch.tod, &batch.dow, ts)?;
    let h = assemble_representation(g, &c.layout(), e_obs, e_s, e_t, prompt)?;
    let h = interact(g, params, h, c, sink)?;
    fuse_and_predict(g, params, h, c)
}

/// Network configuration plus its weights.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        check_params(&config, &params)?;
        Ok(Self { config, params })
    }

    /// Normalized prediction `[B, T', N, C_out]`.
    pub fn predict(&self, prompt: &Tensor, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let p = g.constant(prompt.clone());
        let y = msti_forward(&mut g, &self.config, &b, p, batch, None)?;
        Ok(g.value(y).clone())
    }

    pub fn predict_with_attention(&self, prompt: &Tensor, batch: &Batch) -> Result<(Tensor, Vec<AttentionMap>)> {
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let p = g.constant(prompt.clone());
        let mut sink = MapSink::new();
        let y = msti_forward(&mut g, &self.config, &b, p, batch, Some(&mut sink))?;
        Ok((g.value(y).clone(), sink.collect(&g)))
    }

    /// Prompt tensor shape for this configuration and `nodes`.
    pub fn prompt_shape(&self, nodes: usize) -> [usize; 2] {
        prompt_shape(&self.config, nodes)
    }
}

pub fn prompt_shape(c: &ModelConfig, nodes: usize) -> [usize; 2] {
    match c.prompt_mode {
        crate::config::PromptMode::PerNode => [nodes, c.d_p],
        crate::config::PromptMode::Global => [1, c.d_p],
    }
}
