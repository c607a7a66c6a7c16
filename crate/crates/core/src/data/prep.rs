use std::ops::Range;

use chrono::{Datelike, Duration, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{DatasetManifest, StDataset};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Statistics over steps `train` of `dataset`, pooled across nodes.
pub fn compute_norm_stats(dataset: &StDataset, train: Range<usize>) -> Result<NormStats> {
    let m = &dataset.manifest;
    if train.is_empty() || train.end > m.t_all {
        return Err(Error::invalid(format!(
            "training range {train:?} invalid for T_all={}",
            m.t_all
        )));
    }
    let count = (train.len() * m.nodes) as f64;
    let mut mean = vec![0.0; m.channels];
    for t in train.clone() {
        for n in 0..m.nodes {
            for (c, mu) in mean.iter_mut().enumerate() {
                *mu += dataset.value(t, n, c);
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= count);
    let mut var = vec![0.0; m.channels];
    for t in train {
        for n in 0..m.nodes {
            for (c, s) in var.iter_mut().enumerate() {
                let d = dataset.value(t, n, c) - mean[c];
                *s += d * d;
            }
        }
    }
    let std = var
        .iter()
        .map(|s| (s / count).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std` with the channel on the trailing axis.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let c = self.channels();
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, z: &Tensor) -> Result<Tensor> {
        self.check(z)?;
        let c = self.channels();
        let mut out = z.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        Ok(out)
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.last_dim() != self.channels() {
            return Err(Error::shape(format!(
                "normalization stats cover {} channels, tensor has {}",
                self.channels(),
                x.last_dim()
            )));
        }
        Ok(())
    }
}

/// Chronological train/validation/test step ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// 7:1:2 split: floor for train and validation, remainder to test. Each part
/// must hold at least one window of `input_len + horizon` steps.
pub fn split_7_1_2(t_all: usize, input_len: usize, horizon: usize) -> Result<SplitRanges> {
    let train = t_all * 7 / 10;
    let val = t_all / 10;
    let test = t_all - train - val;
    let need = input_len + horizon;
    for (name, len) in [("train", train), ("validation", val), ("test", test)] {
        if len < need {
            return Err(Error::invalid(format!(
                "{name} split has {len} steps; a window needs {need} (T_all={t_all})"
            )));
        }
    }
    Ok(SplitRanges {
        train: 0..train,
        val: train..train + val,
        test: train + val..t_all,
    })
}

/// Window start offsets within a range of `range_len` steps. Window `s`
/// reads inputs `[s, s+T)` and targets `[s+T, s+T+T')`.
pub fn make_windows(range_len: usize, input_len: usize, horizon: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 || input_len == 0 || horizon == 0 {
        return Err(Error::invalid("window lengths and stride must be positive"));
    }
    let span = input_len + horizon;
    if range_len < span {
        return Err(Error::invalid(format!(
            "range of {range_len} steps is shorter than one window ({span})"
        )));
    }
    Ok((0..=range_len - span).step_by(stride).collect())
}

/// Splits plus absolute window starts for each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSplit {
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub ranges: SplitRanges,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl WindowedSplit {
    pub fn new(t_all: usize, input_len: usize, horizon: usize, stride: usize) -> Result<Self> {
        let ranges = split_7_1_2(t_all, input_len, horizon)?;
        let abs = |r: &Range<usize>| -> Result<Vec<usize>> {
            Ok(make_windows(r.len(), input_len, horizon, stride)?
                .into_iter()
                .map(|s| s + r.start)
                .collect())
        };
        Ok(Self {
            input_len,
            horizon,
            stride,
            train: abs(&ranges.train)?,
            val: abs(&ranges.val)?,
            test: abs(&ranges.test)?,
            ranges,
        })
    }
}

/// Time-of-day slot, day-of-week (Monday = 0) and the six-component
/// timestamp vector `[month/12, day/31, weekday/7, hour/24, minute/60, second/60]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalIndicators {
    pub tod: usize,
    pub dow: usize,
    pub ts: [f64; 6],
}

pub fn temporal_indicators(manifest: &DatasetManifest, t: usize) -> Result<TemporalIndicators> {
    let start = manifest.start()?;
    let at = start + Duration::minutes(t as i64 * manifest.interval_minutes as i64);
    let minute_of_day = at.hour() as usize * 60 + at.minute() as usize;
    let dow = at.weekday().num_days_from_monday() as usize;
    Ok(TemporalIndicators {
        tod: minute_of_day / manifest.interval_minutes as usize,
        dow,
        ts: [
            at.month() as f64 / 12.0,
            at.day() as f64 / 31.0,
            dow as f64 / 7.0,
            at.hour() as f64 / 24.0,
            at.minute() as f64 / 60.0,
            at.second() as f64 / 60.0,
        ],
    })
}

/// Indicators for every step of the dataset.
pub fn all_temporal_indicators(manifest: &DatasetManifest) -> Result<Vec<TemporalIndicators>> {
    (0..manifest.t_all)
        .map(|t| temporal_indicators(manifest, t))
        .collect()
}
