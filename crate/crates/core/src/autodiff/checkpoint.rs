//! Parameter checkpoints: a JSON manifest next to a flat little-endian
//! `f64` blob.
//!
//! `<stem>.json` lists every parameter's name, shape and offset (in values)
//! into `<stem>.bin`, plus the seed and config hash that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::params::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub data_file: String,
    pub total_values: usize,
    pub tensors: Vec<TensorEntry>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn save_checkpoint(params: &ParamSet, seed: u64, config_hash: &str, stem: &Path) -> Result<CheckpointManifest> {
    let (json, bin) = paths(stem);
    let mut tensors = Vec::with_capacity(params.len());
    let mut blob = Vec::with_capacity(params.num_scalars() * 8);
    let mut offset = 0;
    for (name, m) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            offset,
        });
        offset += m.data().len();
        for v in m.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        seed,
        config_hash: config_hash.to_string(),
        data_file: bin.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        total_values: offset,
        tensors,
    };
    fs::write(&bin, &blob).map_err(|e| Error::io(&bin, e))?;
    fs::write(&json, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&json, e))?;
    Ok(manifest)
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(stem: &Path) -> Result<(CheckpointManifest, ParamSet)> {
    let (json, _) = paths(stem);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: json.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    let bin = json.with_file_name(&manifest.data_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != manifest.total_values * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, manifest expects {} values",
            bin.display(),
            bytes.len(),
            manifest.total_values
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut params = ParamSet::new();
    for t in &manifest.tensors {
        let end = t.offset + t.rows * t.cols;
        if end > values.len() {
            return Err(Error::DimensionMismatch(format!("tensor {} runs past the data", t.name)));
        }
        params.add(t.name.clone(), DenseMatrix::new(t.rows, t.cols, values[t.offset..end].to_vec())?);
    }
    Ok((manifest, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = ParamSet::new();
        let mut rng = Rng::new(0);
        params.xavier("a", 3, 4, &mut rng);
        params.add("b", DenseMatrix::from_rows(&[[f64::MIN_POSITIVE, -0.0, 1e300]]).unwrap());
        let stem = dir.path().join("ckpt");
        let m = save_checkpoint(&params, 7, "abc", &stem).unwrap();
        assert_eq!(m.total_values, 15);
        let (m2, back) = load_checkpoint(&stem).unwrap();
        assert_eq!(m, m2);
        for ((n1, a), (n2, b)) in params.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            let bits = |m: &DenseMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncated_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = ParamSet::new();
        params.zeros("z", 2, 2);
        let stem = dir.path().join("c");
        save_checkpoint(&params, 0, "", &stem).unwrap();
        fs::write(stem.with_extension("bin"), [0u8; 12]).unwrap();
        assert_eq!(load_checkpoint(&stem).unwrap_err().kind(), "DimensionMismatch");
    }
}
