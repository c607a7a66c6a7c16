use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic, write_json};
use crate::numerics::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const OBSERVATIONS_FILE: &str = "observations.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(rename = "T_all")]
    pub t_all: usize,
    #[serde(rename = "N")]
    pub nodes: usize,
    #[serde(rename = "C")]
    pub channels: usize,
    pub interval_minutes: u32,
    /// ISO-8601 UTC, e.g. `2024-01-01T00:00:00Z`.
    pub start_timestamp: String,
    /// `(longitude, latitude)` in degrees, one per node.
    pub coords: Vec<[f64; 2]>,
    pub channel_names: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.t_all == 0 || self.nodes == 0 || self.channels == 0 {
            return Err(Error::invalid("T_all, N and C must be positive"));
        }
        if self.interval_minutes == 0 || 1440 % self.interval_minutes != 0 {
            return Err(Error::invalid(format!(
                "interval_minutes {} does not divide a day",
                self.interval_minutes
            )));
        }
        if self.coords.len() != self.nodes {
            return Err(Error::invalid(format!(
                "{} coordinates for {} nodes",
                self.coords.len(),
                self.nodes
            )));
        }
        if self.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        if self.channel_names.len() != self.channels {
            return Err(Error::invalid(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.channels
            )));
        }
        self.start()?;
        Ok(())
    }

    /// Slots per day, `1440 / interval_minutes`.
    pub fn slots_per_day(&self) -> usize {
        (1440 / self.interval_minutes) as usize
    }

    pub fn start(&self) -> Result<DateTime<Utc>> {
        DateTime::parse_from_rfc3339(&self.start_timestamp)
            .map(|d| d.with_timezone(&Utc))
            .map_err(|e| Error::invalid(format!("start_timestamp `{}`: {e}", self.start_timestamp)))
    }
}

/// Observations `T_all × N × C` with their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct StDataset {
    pub manifest: DatasetManifest,
    pub observations: Tensor,
}

impl StDataset {
    pub fn new(manifest: DatasetManifest, observations: Tensor) -> Result<Self> {
        manifest.validate()?;
        let expected = [manifest.t_all, manifest.nodes, manifest.channels];
        if observations.shape() != expected {
            return Err(Error::shape(format!(
                "observations {:?} vs manifest {:?}",
                observations.shape(),
                expected
            )));
        }
        observations.ensure_finite("dataset observations")?;
        Ok(Self {
            manifest,
            observations,
        })
    }

    pub fn value(&self, t: usize, n: usize, c: usize) -> f64 {
        let m = &self.manifest;
        self.observations.data()[(t * m.nodes + n) * m.channels + c]
    }

    /// Coordinates min-max scaled to `[0, 1]` per axis; a degenerate axis maps to 0.
    pub fn normalized_coords(&self) -> Tensor {
        let coords = &self.manifest.coords;
        let mut out = Tensor::zeros(&[coords.len(), 2]);
        for axis in 0..2 {
            let lo = coords.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
            let hi = coords.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for (n, c) in coords.iter().enumerate() {
                let v = if span > 0.0 { (c[axis] - lo) / span } else { 0.0 };
                out.set(&[n, axis], v);
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)?;
        let m = &self.manifest;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = Vec::with_capacity(1 + m.nodes * m.channels);
        header.push("t".to_string());
        for n in 0..m.nodes {
            for c in 0..m.channels {
                header.push(format!("node{n}_ch{c}"));
            }
        }
        let csv_err = |e: csv::Error| Error::format(dir.join(OBSERVATIONS_FILE), e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        let width = m.nodes * m.channels;
        for (t, row) in self.observations.data().chunks_exact(width).enumerate() {
            let mut rec = Vec::with_capacity(width + 1);
            rec.push(t.to_string());
            // 17 significant digits round-trips every f64 exactly
            rec.extend(row.iter().map(|v| format!("{v:.16e}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::format(dir.join(OBSERVATIONS_FILE), e.to_string()))?;
        write_atomic(&dir.join(OBSERVATIONS_FILE), &bytes)
    }
}

/// Reads a dataset directory holding `manifest.json` and `observations.csv`.
pub fn load_dataset(dir: &Path) -> Result<StDataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(&read_to_string(&mpath)?)
        .map_err(|e| Error::format(&mpath, e.to_string()))?;
    manifest
        .validate()
        .map_err(|e| Error::format(&mpath, e.to_string()))?;

    let opath = dir.join(OBSERVATIONS_FILE);
    let file = fs::File::open(&opath).map_err(|e| Error::io(&opath, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let width = manifest.nodes * manifest.channels;
    let mut data = Vec::with_capacity(manifest.t_all * width);
    let mut rows = 0usize;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(&opath, e.to_string()))?;
        if rec.len() != width + 1 {
            return Err(Error::format(
                &opath,
                format!("row {r}: expected {} columns, found {}", width + 1, rec.len()),
            ));
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(&opath, format!("row {r}, column {c}: cannot parse `{field}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    &opath,
                    format!("row {r}, column {c}: non-finite value `{field}`"),
                ));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != manifest.t_all {
        return Err(Error::format(
            &opath,
            format!("manifest declares T_all={} but found {rows} rows", manifest.t_all),
        ));
    }
    let observations = Tensor::new(vec![manifest.t_all, manifest.nodes, manifest.channels], data)?;
    StDataset::new(manifest, observations)
}
