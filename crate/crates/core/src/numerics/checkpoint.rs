//! Parameter checkpoints: `params.json` lists `{name, shape}` in store order;
//! each parameter has a little-endian `f64` file and a one-byte-per-element
//! freeze mask file, both named from a sanitized form of its path.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic, write_json};

use super::{ParamStore, Parameter, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

pub const PARAMS_INDEX: &str = "params.json";

/// File stem for a parameter path: `/` becomes `__`, anything outside
/// `[A-Za-z0-9_-]` becomes `_`.
pub fn sanitize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 8);
    for ch in name.chars() {
        match ch {
            '/' => out.push_str("__"),
            c if c.is_ascii_alphanumeric() || c == '_' || c == '-' => out.push(c),
            _ => out.push('_'),
        }
    }
    out
}

pub fn save_params(dir: &Path, store: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut seen = HashSet::new();
    let mut index = Vec::with_capacity(store.len());
    for p in store.iter() {
        let stem = sanitize_name(p.name());
        if !seen.insert(stem.clone()) {
            return Err(Error::invalid(format!(
                "parameter names collide after sanitizing: `{stem}`"
            )));
        }
        let mut bytes = Vec::with_capacity(p.value.len() * 8);
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(&dir.join(format!("{stem}.f64")), &bytes)?;
        let mask: Vec<u8> = p.freeze_mask().iter().map(|&m| m as u8).collect();
        write_atomic(&dir.join(format!("{stem}.mask")), &mask)?;
        index.push(ParamEntry {
            name: p.name().to_string(),
            shape: p.shape().to_vec(),
        });
    }
    write_json(&dir.join(PARAMS_INDEX), &index)
}

pub fn load_params(dir: &Path) -> Result<ParamStore> {
    let index_path = dir.join(PARAMS_INDEX);
    let entries: Vec<ParamEntry> = serde_json::from_str(&read_to_string(&index_path)?)
        .map_err(|e| Error::format(&index_path, e.to_string()))?;
    let mut store = ParamStore::new();
    for entry in entries {
        let stem = sanitize_name(&entry.name);
        let vpath = dir.join(format!("{stem}.f64"));
        let bytes = fs::read(&vpath).map_err(|e| Error::io(&vpath, e))?;
        let count: usize = entry.shape.iter().product();
        if bytes.len() != count * 8 {
            return Err(Error::format(
                &vpath,
                format!("expected {} bytes for shape {:?}, found {}", count * 8, entry.shape, bytes.len()),
            ));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let value = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| Error::format(&vpath, e.to_string()))?;
        let mpath = dir.join(format!("{stem}.mask"));
        let mask_bytes = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
        if mask_bytes.len() != count || mask_bytes.iter().any(|&b| b > 1) {
            return Err(Error::format(&mpath, "mask must hold one 0/1 byte per element"));
        }
        let mut p = Parameter::new(entry.name, value);
        p.set_freeze_mask(mask_bytes.iter().map(|&b| b == 1).collect())?;
        store.insert(p)?;
    }
    Ok(store)
}
