//! Weight-behaviour modelling: per-epoch snapshots, element-wise variance
//! and accumulative freeze masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PROMPT_PARAM;
use crate::numerics::{ParamStore, Tensor};

/// Ordered snapshots per parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotHistory {
    entries: Vec<(String, Vec<Tensor>)>,
}

impl SnapshotHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops everything and starts over from the current values of `store`.
    pub fn reset(&mut self, store: &ParamStore) {
        self.entries = store
            .iter()
            .filter(|p| p.name() != PROMPT_PARAM)
            .map(|p| (p.name().to_string(), vec![p.value.clone()]))
            .collect();
    }

    /// Appends the current values of `store`; names must match the history.
    pub fn record(&mut self, store: &ParamStore) -> Result<()> {
        if self.entries.is_empty() {
            self.reset(store);
            return Ok(());
        }
        for (name, snaps) in &mut self.entries {
            let p = store.get(name)?;
            snaps.push(p.value.clone());
        }
        Ok(())
    }

    /// Appends one value directly.
    pub fn push(&mut self, name: &str, value: Tensor) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some((_, snaps)) => snaps.push(value),
            None => self.entries.push((name.to_string(), vec![value])),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Snapshots per name (all names share one count when built by `record`).
    pub fn len(&self) -> usize {
        self.entries.first().map_or(0, |(_, s)| s.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Tensor])> {
        self.entries.iter().map(|(n, s)| (n.as_str(), s.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    /// Each element is judged on its own variance.
    Element,
    /// A whole tensor is stable when its mean element variance is below the
    /// threshold.
    PerTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreezeEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Population variance per element over the snapshots.
    pub variance: Vec<f64>,
    pub stable: Vec<bool>,
}

impl FreezeEntry {
    pub fn stable_fraction(&self) -> f64 {
        self.stable.iter().filter(|&&s| s).count() as f64 / self.stable.len() as f64
    }

    pub fn dynamic(&self) -> Vec<bool> {
        self.stable.iter().map(|s| !s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreezeReport {
    pub threshold: f64,
    pub entries: Vec<FreezeEntry>,
}

/// Histogram edges `1e-14, 1e-13, …, 1e0`: bin 0 holds values below `1e-14`,
/// bin 15 values at or above `1`.
pub const HISTOGRAM_BINS: usize = 16;

pub fn histogram_edges() -> Vec<f64> {
    (0..HISTOGRAM_BINS as i32 - 1)
        .map(|k| format!("1e{}", k - 14).parse().expect("valid literal"))
        .collect()
}

pub fn variance_histogram(values: &[f64]) -> Vec<usize> {
    let edges = histogram_edges();
    let mut bins = vec![0; HISTOGRAM_BINS];
    for &v in values {
        bins[edges.partition_point(|&e| e <= v)] += 1;
    }
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeSummary {
    pub name: String,
    pub shape: Vec<usize>,
    pub stable_fraction: f64,
    pub variance_histogram: Vec<usize>,
}

impl FreezeReport {
    pub fn stable_fraction(&self) -> f64 {
        let total: usize = self.entries.iter().map(|e| e.stable.len()).sum();
        let stable: usize = self
            .entries
            .iter()
            .map(|e| e.stable.iter().filter(|&&s| s).count())
            .sum();
        if total == 0 {
            0.0
        } else {
            stable as f64 / total as f64
        }
    }

    /// Re-judges every tensor as a whole by its mean element variance.
    pub fn per_tensor(mut self) -> Self {
        for e in &mut self.entries {
            let mean = e.variance.iter().sum::<f64>() / e.variance.len() as f64;
            let verdict = mean < self.threshold;
            e.stable.iter_mut().for_each(|s| *s = verdict);
        }
        self
    }

    pub fn summaries(&self) -> Vec<FreezeSummary> {
        self.entries
            .iter()
            .map(|e| FreezeSummary {
                name: e.name.clone(),
                shape: e.shape.clone(),
                stable_fraction: e.stable_fraction(),
                variance_histogram: variance_histogram(&e.variance),
            })
            .collect()
    }
}

/// Element-wise population variance (Welford) over every snapshot of every
/// name; stable iff the variance is below `threshold`.
pub fn variance_partition(history: &SnapshotHistory, threshold: f64) -> Result<FreezeReport> {
    if !(threshold > 0.0) {
        return Err(Error::Config("variance threshold must be positive".into()));
    }
    let mut entries = Vec::new();
    for (name, snaps) in history.iter() {
        if snaps.len() < 2 {
            return Err(Error::invalid(format!(
                "`{name}` has {} snapshot(s); at least 2 are needed",
                snaps.len()
            )));
        }
        let shape = snaps[0].shape().to_vec();
        let n = snaps[0].len();
        let mut mean = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        for (k, s) in snaps.iter().enumerate() {
            if s.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "snapshot {k} of `{name}` has shape {:?}, first has {shape:?}",
                    s.shape()
                )));
            }
            let count = (k + 1) as f64;
            for (i, &x) in s.data().iter().enumerate() {
                let d = x - mean[i];
                mean[i] += d / count;
                m2[i] += d * (x - mean[i]);
            }
        }
        let count = snaps.len() as f64;
        let variance: Vec<f64> = m2.iter().map(|v| (v / count).max(0.0)).collect();
        let stable = variance.iter().map(|&v| v < threshold).collect();
        entries.push(FreezeEntry {
            name: name.to_string(),
            shape,
            variance,
            stable,
        });
    }
    Ok(FreezeReport { threshold, entries })
}

/// `mask := mask OR stable` for every reported parameter. The prompt is
/// never frozen.
pub fn apply_freeze(params: &mut ParamStore, report: &FreezeReport) -> Result<()> {
    for e in &report.entries {
        if e.name == PROMPT_PARAM {
            continue;
        }
        let p = params.get_mut(&e.name)?;
        if p.shape() != e.shape.as_slice() {
            return Err(Error::shape(format!(
                "freeze report for `{}` has shape {:?}, parameter has {:?}",
                e.name,
                e.shape,
                p.shape()
            )));
        }
        let mask = p
            .freeze_mask()
            .iter()
            .zip(&e.stable)
            .map(|(&a, &b)| a || b)
            .collect();
        p.set_freeze_mask(mask)?;
    }
    Ok(())
}
