//! Checkpoint files: a JSON manifest plus a flat little-endian `f64` blob.
//!
//! The manifest lists every array's name, shape and byte offset into the
//! blob. Loading reproduces the parameters bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_json, write_atomic, write_json};

pub const FORMAT: &str = "f64-le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub total_bytes: usize,
    pub fields: Vec<FieldEntry>,
}

/// Serializes `params` into a manifest and blob bytes.
pub fn encode(params: &ModelParams, blob_name: &str) -> (Manifest, Vec<u8>) {
    let mut bytes = Vec::with_capacity(params.num_params() * 8);
    let mut fields = Vec::new();
    for (name, t) in params.named_tensors() {
        fields.push(FieldEntry {
            name,
            shape: t.shape().to_vec(),
            offset: bytes.len(),
        });
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        config: params.config,
        blob: blob_name.to_string(),
        total_bytes: bytes.len(),
        fields,
    };
    (manifest, bytes)
}

pub fn decode(manifest: &Manifest, bytes: &[u8]) -> Result<ModelParams> {
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unknown format `{}`",
            manifest.format
        )));
    }
    if bytes.len() != manifest.total_bytes {
        return Err(Error::Checkpoint(format!(
            "blob has {} bytes, manifest says {}",
            bytes.len(),
            manifest.total_bytes
        )));
    }
    let mut params = ModelParams::zeros(&manifest.config)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != manifest.fields.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} fields, config implies {}",
            manifest.fields.len(),
            expected.len()
        )));
    }
    for ((slot, (name, shape)), entry) in params
        .tensors_mut()
        .into_iter()
        .zip(&expected)
        .zip(&manifest.fields)
    {
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "field {} {:?} does not match expected {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        let n: usize = shape.iter().product();
        let end = entry.offset + n * 8;
        let raw = bytes
            .get(entry.offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("field {name} runs past the blob")))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        *slot = Tensor::from_vec(shape, data)?;
    }
    Ok(params)
}

/// Writes `<dir>/params.json` and `<dir>/params.bin`.
pub fn save(params: &ModelParams, dir: &Path) -> Result<()> {
    let (manifest, bytes) = encode(params, "params.bin");
    write_atomic(&dir.join("params.bin"), &bytes)?;
    write_json(&dir.join("params.json"), &manifest)
}

pub fn load(dir: &Path) -> Result<ModelParams> {
    let manifest: Manifest = read_json(&dir.join("params.json"))?;
    let blob_path = dir.join(&manifest.blob);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    decode(&manifest, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = init_params(&ModelConfig::toy(17)).unwrap();
        p.head.data_mut()[0] = f64::MIN_POSITIVE / 3.0; // subnormal survives
        p.head.data_mut()[1] = -0.0;
        save(&p, dir.path()).unwrap();
        let q = load(dir.path()).unwrap();
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(p.config, q.config);
    }

    #[test]
    fn offsets_are_contiguous() {
        let p = init_params(&ModelConfig::toy(17)).unwrap();
        let (m, bytes) = encode(&p, "x.bin");
        assert_eq!(m.fields[0].offset, 0);
        assert_eq!(m.fields[1].offset, 17 * 32 * 8);
        assert_eq!(bytes.len(), p.num_params() * 8);
    }

    #[test]
    fn truncated_blob_rejected() {
        let p = init_params(&ModelConfig::toy(17)).unwrap();
        let (m, bytes) = encode(&p, "x.bin");
        assert!(decode(&m, &bytes[..bytes.len() - 8]).is_err());
    }
}
