//! Seeded multi-task generator. Every task is an affine image of one shared
//! latent field plus a task-specific perturbation whose weight is
//! `1 - coupling`, plus Gaussian noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{DatasetManifest, StDataset};

/// Monday 00:00 UTC, so step 0 has tod = 0 and dow = 0.
pub const SYNTHETIC_START: &str = "2024-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub tasks: usize,
    pub nodes: usize,
    pub steps: usize,
    pub interval_minutes: u32,
    pub coupling: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            tasks: 3,
            nodes: 16,
            steps: 1344,
            interval_minutes: 15,
            coupling: 1.0,
            noise_sd: 0.1,
        }
    }
}

struct TaskShape {
    scale: f64,
    offset: f64,
    harmonic: f64,
    phase: f64,
    dir: (f64, f64),
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<StDataset>> {
    if spec.tasks == 0 || spec.nodes == 0 || spec.steps == 0 {
        return Err(Error::invalid("tasks, nodes and steps must be at least 1"));
    }
    if spec.interval_minutes == 0 || 1440 % spec.interval_minutes != 0 {
        return Err(Error::invalid(format!(
            "interval {} does not divide a day",
            spec.interval_minutes
        )));
    }
    if !(0.0..=1.0).contains(&spec.coupling) {
        return Err(Error::invalid("coupling must lie in [0, 1]"));
    }
    if !spec.noise_sd.is_finite() || spec.noise_sd < 0.0 {
        return Err(Error::invalid("noise_sd must be finite and non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cols = (spec.nodes as f64).sqrt().ceil() as usize;
    let rows = spec.nodes.div_ceil(cols);
    let grid: Vec<(f64, f64)> = (0..spec.nodes)
        .map(|n| {
            let (c, r) = (n % cols, n / cols);
            let gx = if cols > 1 { c as f64 / (cols - 1) as f64 } else { 0.0 };
            let gy = if rows > 1 { r as f64 / (rows - 1) as f64 } else { 0.0 };
            (gx, gy)
        })
        .collect();
    let coords: Vec<[f64; 2]> = (0..spec.nodes)
        .map(|n| [-74.02 + 0.01 * (n % cols) as f64, 40.70 + 0.01 * (n / cols) as f64])
        .collect();

    let slope = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5));
    let shapes: Vec<TaskShape> = (0..spec.tasks)
        .map(|_| TaskShape {
            scale: rng.gen_range(0.8..2.0),
            offset: rng.gen_range(4.0..8.0),
            harmonic: if rng.gen_bool(0.5) { 2.0 } else { 3.0 },
            phase: rng.gen_range(0.0..2.0 * PI),
            dir: (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        })
        .collect();

    let minutes = spec.interval_minutes as f64;
    let latent = |t: usize, n: usize| {
        let day = t as f64 * minutes / 1440.0;
        let week = t as f64 * minutes / 10080.0;
        let (gx, gy) = grid[n];
        (2.0 * PI * day).sin() + 0.5 * (2.0 * PI * week).sin() + slope.0 * gx + slope.1 * gy
    };

    let mut out = Vec::with_capacity(spec.tasks);
    for (k, shape) in shapes.iter().enumerate() {
        let weight = 1.0 - spec.coupling;
        let mut data = Vec::with_capacity(spec.steps * spec.nodes);
        for t in 0..spec.steps {
            let day = t as f64 * minutes / 1440.0;
            for (n, &(gx, gy)) in grid.iter().enumerate() {
                let bump = 0.5 + 0.5 * (PI * (gx * shape.dir.0 + gy * shape.dir.1)).cos();
                let perturb = (2.0 * PI * shape.harmonic * day + shape.phase).sin() * bump;
                let eps: f64 = rng.sample(StandardNormal);
                data.push(
                    shape.scale * latent(t, n) + shape.offset + weight * perturb + spec.noise_sd * eps,
                );
            }
        }
        let manifest = DatasetManifest {
            name: format!("task{k}"),
            t_all: spec.steps,
            nodes: spec.nodes,
            channels: 1,
            interval_minutes: spec.interval_minutes,
            start_timestamp: SYNTHETIC_START.to_string(),
            coords: coords.clone(),
            channel_names: vec!["value".to_string()],
        };
        let obs = Tensor::new(vec![spec.steps, spec.nodes, 1], data)?;
        out.push(StDataset::new(manifest, obs)?);
    }
    Ok(out)
}
