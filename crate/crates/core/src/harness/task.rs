use crate::data::{all_temporal_indicators, compute_norm_stats, NormStats, StDataset, TemporalIndicators, WindowedSplit};
use crate::error::{Error, Result};
use crate::model::Batch;
use crate::numerics::Tensor;

/// A dataset prepared for training: normalized once, windowed once.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub dataset: StDataset,
    pub norm: NormStats,
    pub split: WindowedSplit,
    /// Windows used for gradient steps; a strided subset of `split.train`.
    pub train_windows: Vec<usize>,
    normalized: Tensor,
    indicators: Vec<TemporalIndicators>,
    coords: Tensor,
    out_channels: usize,
}

impl TaskData {
    /// `train_stride` thins the training windows only; validation and test
    /// always use every window.
    pub fn new(
        dataset: StDataset,
        input_len: usize,
        horizon: usize,
        train_stride: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if train_stride == 0 {
            return Err(Error::invalid("train_stride must be positive"));
        }
        if out_channels == 0 || out_channels > dataset.manifest.channels {
            return Err(Error::invalid(format!(
                "cannot predict {out_channels} of {} channels",
                dataset.manifest.channels
            )));
        }
        let split = WindowedSplit::new(dataset.manifest.t_all, input_len, horizon, 1)?;
        let norm = compute_norm_stats(&dataset, split.ranges.train.clone())?;
        let normalized = norm.normalize(&dataset.observations)?;
        let indicators = all_temporal_indicators(&dataset.manifest)?;
        let coords = dataset.normalized_coords();
        let train_windows = split.train.iter().copied().step_by(train_stride).collect();
        Ok(Self {
            dataset,
            norm,
            split,
            train_windows,
            normalized,
            indicators,
            coords,
            out_channels,
        })
    }

    pub fn name(&self) -> &str {
        &self.dataset.manifest.name
    }

    pub fn nodes(&self) -> usize {
        self.dataset.manifest.nodes
    }

    pub fn channels(&self) -> usize {
        self.dataset.manifest.channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn slots_per_day(&self) -> usize {
        self.dataset.manifest.slots_per_day()
    }

    pub fn input_len(&self) -> usize {
        self.split.input_len
    }

    pub fn horizon(&self) -> usize {
        self.split.horizon
    }

    /// Normalized inputs and targets for the windows starting at `starts`.
    pub fn batch(&self, starts: &[usize]) -> Result<Batch> {
        if starts.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let (t_in, t_out) = (self.input_len(), self.horizon());
        let (n, c, co) = (self.nodes(), self.channels(), self.out_channels);
        let t_all = self.dataset.manifest.t_all;
        let b = starts.len();
        let mut x = Vec::with_capacity(b * t_in * n * c);
        let mut y = Vec::with_capacity(b * t_out * n * co);
        let mut ts = Vec::with_capacity(b * t_in * 6);
        let mut tod = Vec::with_capacity(b * t_in);
        let mut dow = Vec::with_capacity(b * t_in);
        let z = self.normalized.data();
        for &s in starts {
            if s + t_in + t_out > t_all {
                return Err(Error::invalid(format!(
                    "window at {s} runs past the end of {t_all} steps"
                )));
            }
            x.extend_from_slice(&z[s * n * c..(s + t_in) * n * c]);
            for t in s + t_in..s + t_in + t_out {
                for node in 0..n {
                    let at = (t * n + node) * c;
                    y.extend_from_slice(&z[at..at + co]);
                }
            }
            for ind in &self.indicators[s..s + t_in] {
                ts.extend_from_slice(&ind.ts);
                tod.push(ind.tod);
                dow.push(ind.dow);
            }
        }
        Ok(Batch {
            x: Tensor::new(vec![b, t_in, n, c], x)?,
            y: Tensor::new(vec![b, t_out, n, co], y)?,
            tod,
            dow,
            ts: Tensor::new(vec![b, t_in, 6], ts)?,
            coords: self.coords.clone(),
        })
    }

    /// Raw (unnormalized) observation used as ground truth.
    pub fn raw(&self, t: usize, node: usize, channel: usize) -> f64 {
        self.dataset.value(t, node, channel)
    }
}
