//! Checkpoint directories: `manifest.json` plus `params.bin`.
//!
//! The blob holds every tensor as little-endian `f32`, concatenated in
//! manifest order. Each manifest entry records the tensor's shape, byte
//! offset, byte length and SHA-256 digest, and the manifest carries a
//! digest of its own format, configuration and tensor table.

use std::fs;
use std::path::Path;

use radgen_tensor::{Parameters, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_parameters, ModelConfig, ModelParameters};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
const FORMAT: &str = "radgen-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub digest: String,
}

impl Manifest {
    fn content_digest(&self) -> Result<String> {
        Ok(digest(&serde_json::to_vec(&(
            &self.format,
            &self.config,
            &self.tensors,
        ))?))
    }
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `params` and `cfg` into `dir`, creating it if needed.
pub fn save_checkpoint(dir: &Path, cfg: &ModelConfig, params: &ModelParameters) -> Result<Manifest> {
    check_parameters(cfg, params)?;
    if !params.is_finite() {
        return Err(Error::Data("refusing to checkpoint non-finite parameters".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(params.numel() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        let start = blob.len();
        for v in t.values() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: start as u64,
            bytes: (blob.len() - start) as u64,
            sha256: digest(&blob[start..]),
        });
    }
    let mut manifest = Manifest {
        format: FORMAT.into(),
        config: cfg.clone(),
        tensors,
        digest: String::new(),
    };
    manifest.digest = manifest.content_digest()?;
    let path = dir.join(PARAMS_FILE);
    fs::write(&path, &blob).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a checkpoint, verifying every tensor against its digest.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelParameters, ModelConfig)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Integrity {
        tensor: MANIFEST_FILE.into(),
        detail: e.to_string(),
    })?;
    if manifest.format != FORMAT {
        return Err(Error::Integrity {
            tensor: MANIFEST_FILE.into(),
            detail: format!("unknown format {:?}", manifest.format),
        });
    }
    if manifest.content_digest()? != manifest.digest {
        return Err(Error::Integrity {
            tensor: MANIFEST_FILE.into(),
            detail: "manifest checksum mismatch".into(),
        });
    }
    let path = dir.join(PARAMS_FILE);
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut params = Parameters::new();
    let mut expected_end = 0u64;
    for entry in &manifest.tensors {
        let fail = |detail: String| Error::Integrity {
            tensor: entry.name.clone(),
            detail,
        };
        let n: usize = entry.shape.iter().product();
        if entry.bytes != n as u64 * 4 || entry.offset != expected_end {
            return Err(fail("manifest offsets are inconsistent".into()));
        }
        expected_end += entry.bytes;
        let (start, end) = (entry.offset as usize, (entry.offset + entry.bytes) as usize);
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| fail(format!("blob truncated at {} of {end} bytes", blob.len())))?;
        if digest(bytes) != entry.sha256 {
            return Err(fail("checksum mismatch".into()));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params
            .insert(entry.name.clone(), Tensor::new(entry.shape.clone(), values)?)
            .map_err(|e| fail(e.to_string()))?;
    }
    if blob.len() as u64 != expected_end {
        return Err(Error::Integrity {
            tensor: PARAMS_FILE.into(),
            detail: format!("{} trailing bytes", blob.len() as u64 - expected_end),
        });
    }
    manifest.config.validate()?;
    check_parameters(&manifest.config, &params)?;
    Ok((params, manifest.config))
}

/// Loads a checkpoint and requires its configuration to equal `expected`.
pub fn load_checkpoint_matching(dir: &Path, expected: &ModelConfig) -> Result<ModelParameters> {
    let (params, cfg) = load_checkpoint(dir)?;
    if cfg != *expected {
        return Err(Error::Config(format!(
            "checkpoint configuration {cfg:?} does not match the requested {expected:?}"
        )));
    }
    Ok(params)
}
