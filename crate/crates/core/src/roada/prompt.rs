//! Task summarization: a daily-average sample is encoded per node by a small
//! sigmoid autoencoder, and the latent codes are projected to prompt width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{temporal_indicators, StDataset};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};

/// Mean observation per time-of-day slot over all (possibly partial) days.
/// Returns `[L_t, N, C]`.
pub fn daily_average_sample(dataset: &StDataset) -> Result<Tensor> {
    let m = &dataset.manifest;
    let slots = m.slots_per_day();
    if m.t_all < slots {
        return Err(Error::invalid(format!(
            "dataset has {} steps, less than one day of {slots}",
            m.t_all
        )));
    }
    let first_slot = temporal_indicators(m, 0)?.tod;
    let (n, c) = (m.nodes, m.channels);
    let obs = dataset.observations.data();
    let mut out = vec![0.0; slots * n * c];
    for s in 0..slots {
        // first step whose slot is `s`, then whole days after it
        let first = (s + slots - first_slot) % slots;
        let mut count = 0usize;
        let row = &mut out[s * n * c..(s + 1) * n * c];
        for t in (first..m.t_all).step_by(slots) {
            for (acc, v) in row.iter_mut().zip(&obs[t * n * c..(t + 1) * n * c]) {
                *acc += v;
            }
            count += 1;
        }
        row.iter_mut().for_each(|v| *v /= count as f64);
    }
    Tensor::new(vec![slots, n, c], out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    pub latent: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent: 16,
            epochs: 300,
            lr: 0.5,
        }
    }
}

/// Everything produced while summarizing one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPromptArtifact {
    pub task: String,
    /// `[L_t, N, C]`.
    pub sample: Tensor,
    pub enc_w: Tensor,
    pub enc_b: Tensor,
    pub dec_w: Tensor,
    pub dec_b: Tensor,
    /// `[N, d_e]`, entries in `(0, 1)`.
    pub latent: Tensor,
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Scales each channel of `[L_t, N, C]` to `[0, 1]` and lays every node out
/// as one row of `L_t·C` values (slot-major). A flat channel maps to zeros.
pub fn autoencoder_inputs(sample: &Tensor) -> Result<Tensor> {
    let s = sample.shape();
    if s.len() != 3 {
        return Err(Error::shape(format!("sample must be [L_t, N, C], got {s:?}")));
    }
    let (l, n, c) = (s[0], s[1], s[2]);
    let mut lo = vec![f64::INFINITY; c];
    let mut hi = vec![f64::NEG_INFINITY; c];
    for row in sample.data().chunks_exact(c) {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    Ok(Tensor::from_fn(&[n, l * c], |i| {
        let (node, k) = (i / (l * c), i % (l * c));
        let (slot, ch) = (k / c, k % c);
        let v = sample.get(&[slot, node, ch]);
        let span = hi[ch] - lo[ch];
        if span > 0.0 {
            (v - lo[ch]) / span
        } else {
            0.0
        }
    }))
}

fn reconstruction(g: &mut Graph, x: &Tensor, w: [&Tensor; 4]) -> Result<(f64, [Option<Tensor>; 4], Tensor)> {
    let xv = g.constant(x.clone());
    let vars: Vec<_> = w.iter().map(|t| g.param((*t).clone())).collect();
    let h = g.affine(xv, vars[0], vars[1])?;
    let s = g.sigmoid(h)?;
    let r = g.affine(s, vars[2], vars[3])?;
    let loss = g.mse(r, xv)?;
    let value = g.value(loss).data()[0];
    let latent = g.value(s).clone();
    let mut grads = g.backward(loss)?;
    let gs = [0, 1, 2, 3].map(|i| grads.take(vars[i]));
    Ok((value, gs, latent))
}

/// Full-batch gradient descent on the per-node reconstruction MSE.
pub fn train_autoencoder(task: &str, sample: &Tensor, cfg: &AutoencoderConfig, seed: u64) -> Result<TaskPromptArtifact> {
    if cfg.latent == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("autoencoder latent width and lr must be positive".into()));
    }
    let x = autoencoder_inputs(sample)?;
    let width = x.last_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |shape: &[usize], fan_in: usize| {
        let b = 1.0 / (fan_in as f64).sqrt();
        Tensor::from_fn(shape, |_| rng.gen_range(-b..b))
    };
    let mut weights = [
        uniform(&[width, cfg.latent], width),
        uniform(&[cfg.latent], width),
        uniform(&[cfg.latent, width], cfg.latent),
        uniform(&[width], cfg.latent),
    ];
    let mut initial = None;
    let mut last = 0.0;
    for epoch in 0..=cfg.epochs {
        let mut g = Graph::new();
        let (loss, grads, _) = reconstruction(&mut g, &x, [&weights[0], &weights[1], &weights[2], &weights[3]])
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::Divergence(format!("autoencoder epoch {epoch}: {m}")),
                other => other,
            })?;
        initial.get_or_insert(loss);
        last = loss;
        if epoch == cfg.epochs {
            break;
        }
        for (w, gr) in weights.iter_mut().zip(grads) {
            let gr = gr.ok_or_else(|| Error::MissingGradient("autoencoder weight".into()))?;
            for (v, d) in w.data_mut().iter_mut().zip(gr.data()) {
                *v -= cfg.lr * d;
            }
        }
    }
    let latent = encode(&x, &weights[0], &weights[1])?;
    let [enc_w, enc_b, dec_w, dec_b] = weights;
    Ok(TaskPromptArtifact {
        task: task.to_string(),
        sample: sample.clone(),
        enc_w,
        enc_b,
        dec_w,
        dec_b,
        latent,
        initial_mse: initial.unwrap_or(last),
        final_mse: last,
    })
}

/// `sigmoid(x·W + b)` for inputs already laid out by [`autoencoder_inputs`].
pub fn encode(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.constant(w.clone());
    let bv = g.constant(b.clone());
    let h = g.affine(xv, wv, bv)?;
    let s = g.sigmoid(h)?;
    Ok(g.value(s).clone())
}

/// Fixed seeded projection `[d_e] → [d_p]` applied to every node's latent
/// code. Weights are `N(0, 1/d_e)` and there is no bias.
pub fn build_prompt(latent: &Tensor, d_p: usize, seed: u64) -> Result<Tensor> {
    if latent.rank() != 2 || d_p == 0 {
        return Err(Error::shape(format!(
            "latent must be [N, d_e] and d_p positive, got {:?} and {d_p}",
            latent.shape()
        )));
    }
    let d_e = latent.last_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = 1.0 / (d_e as f64).sqrt();
    let proj = Tensor::from_fn(&[d_e, d_p], |_| sd * rng.sample::<f64, _>(StandardNormal));
    let mut g = Graph::new();
    let s = g.constant(latent.clone());
    let w = g.constant(proj);
    let p = g.linear(s, w)?;
    Ok(g.value(p).clone())
}
