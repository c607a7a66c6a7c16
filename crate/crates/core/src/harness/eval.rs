use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Tensor;

use super::TaskData;

/// Entries with `|y|` below this are left out of MAPE.
pub const MAPE_MIN_ABS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub mape: f64,
    pub windows: usize,
    pub elements: usize,
    /// Entries that entered the MAPE average.
    pub mape_elements: usize,
    pub horizon_mae: Vec<f64>,
}

/// Streaming accumulator; feeding entries in the same order gives the same
/// sums regardless of how they were batched.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    abs_sum: f64,
    ape_sum: f64,
    count: usize,
    ape_count: usize,
    horizon_abs: Vec<f64>,
    horizon_count: Vec<usize>,
    windows: usize,
}

impl MetricAccumulator {
    pub fn new(horizon: usize) -> Self {
        Self {
            abs_sum: 0.0,
            ape_sum: 0.0,
            count: 0,
            ape_count: 0,
            horizon_abs: vec![0.0; horizon],
            horizon_count: vec![0; horizon],
            windows: 0,
        }
    }

    pub fn push(&mut self, step: usize, pred: f64, truth: f64) {
        let err = (pred - truth).abs();
        self.abs_sum += err;
        self.count += 1;
        self.horizon_abs[step] += err;
        self.horizon_count[step] += 1;
        if truth.abs() >= MAPE_MIN_ABS {
            self.ape_sum += err / truth.abs();
            self.ape_count += 1;
        }
    }

    pub fn finish_window(&mut self) {
        self.windows += 1;
    }

    pub fn report(&self) -> Result<EvalReport> {
        if self.count == 0 {
            return Err(Error::invalid("no entries to evaluate"));
        }
        Ok(EvalReport {
            mae: self.abs_sum / self.count as f64,
            mape: if self.ape_count == 0 {
                0.0
            } else {
                self.ape_sum / self.ape_count as f64
            },
            windows: self.windows,
            elements: self.count,
            mape_elements: self.ape_count,
            horizon_mae: self
                .horizon_abs
                .iter()
                .zip(&self.horizon_count)
                .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
                .collect(),
        })
    }
}

/// Metrics of `pred` `[T', N]` against `truth` `[T', N]`, both in data units.
pub fn metrics(pred: &[f64], truth: &[f64], horizon: usize) -> Result<EvalReport> {
    if pred.len() != truth.len() || horizon == 0 || pred.len() % horizon != 0 {
        return Err(Error::shape(format!(
            "metrics: {} predictions, {} targets, horizon {horizon}",
            pred.len(),
            truth.len()
        )));
    }
    let per_step = pred.len() / horizon;
    let mut acc = MetricAccumulator::new(horizon);
    for (i, (&p, &y)) in pred.iter().zip(truth).enumerate() {
        acc.push(i / per_step, p, y);
    }
    acc.finish_window();
    acc.report()
}

/// Denormalized predictions for `windows`, `[W, T', N, C_out]`.
pub fn predict_windows(
    model: &Model,
    prompt: &Tensor,
    task: &TaskData,
    windows: &[usize],
    batch_size: usize,
) -> Result<Vec<Tensor>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size) {
        let batch = task.batch(chunk)?;
        let pred = model.predict(prompt, &batch)?;
        let per = pred.len() / chunk.len();
        let shape = pred.shape()[1..].to_vec();
        for w in 0..chunk.len() {
            let mut t = Tensor::new(shape.clone(), pred.data()[w * per..(w + 1) * per].to_vec())?;
            denormalize_prefix(&mut t, task);
            out.push(t);
        }
    }
    Ok(out)
}

fn denormalize_prefix(t: &mut Tensor, task: &TaskData) {
    let co = t.last_dim();
    for row in t.data_mut().chunks_exact_mut(co) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * task.norm.std[c] + task.norm.mean[c];
        }
    }
}

/// MAE and MAPE over every `(window, step, node, channel)` in data units.
pub fn evaluate(
    model: &Model,
    prompt: &Tensor,
    task: &TaskData,
    windows: &[usize],
    batch_size: usize,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::invalid("evaluation needs at least one window"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let (t_in, t_out) = (task.input_len(), task.horizon());
    let (n, co) = (task.nodes(), task.out_channels());
    let mut acc = MetricAccumulator::new(t_out);
    for chunk in windows.chunks(batch_size) {
        let batch = task.batch(chunk)?;
        let pred = model.predict(prompt, &batch)?;
        let p = pred.data();
        for (w, &start) in chunk.iter().enumerate() {
            for step in 0..t_out {
                for node in 0..n {
                    for c in 0..co {
                        let z = p[((w * t_out + step) * n + node) * co + c];
                        let yhat = z * task.norm.std[c] + task.norm.mean[c];
                        acc.push(step, yhat, task.raw(start + t_in + step, node, c));
                    }
                }
            }
            acc.finish_window();
        }
    }
    acc.report()
}
