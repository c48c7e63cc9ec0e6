//! Provenance records: the command line, resolved configuration and a
//! SHA-256 of every input file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use radgen_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: RunConfig,
    /// Input file path to hex SHA-256.
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Checksums of `path`, or of every file below it when it is a directory.
/// Earlier provenance records are skipped.
pub fn checksum_inputs(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<PathBuf> = paths.iter().map(|p| p.to_path_buf()).collect();
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for entry in fs::read_dir(&p).map_err(|e| Error::io(&p, e))? {
                stack.push(entry.map_err(|e| Error::io(&p, e))?.path());
            }
        } else if p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| !n.ends_with(PROVENANCE_FILE))
        {
            out.insert(p.display().to_string(), sha256_file(&p)?);
        }
    }
    Ok(out)
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: std::env::args().collect(),
            seed: config.seed,
            config: config.clone(),
            inputs: checksum_inputs(inputs)?,
        })
    }

    /// Writes `provenance.json` and the resolved `config.toml` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let path = dir.join(PROVENANCE_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("config.toml");
        fs::write(&path, self.config.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    /// Writes `<file>.provenance.json` next to a single-file output.
    pub fn write_beside(&self, file: &Path) -> Result<()> {
        let mut name = file.as_os_str().to_owned();
        name.push(".");
        name.push(PROVENANCE_FILE);
        let path = PathBuf::from(name);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}
