//! Dataset format, synthetic generator, normalization, splitting, windowing
//! and temporal indicators.

mod dataset;
mod prep;
mod synthetic;

pub use dataset::{load_dataset, DatasetManifest, StDataset, MANIFEST_FILE, OBSERVATIONS_FILE};
pub use prep::{
    all_temporal_indicators, compute_norm_stats, make_windows, split_7_1_2, temporal_indicators,
    NormStats, SplitRanges, TemporalIndicators, WindowedSplit, STD_FLOOR,
};
pub use synthetic::{generate_synthetic, SyntheticSpec, SYNTHETIC_START};
