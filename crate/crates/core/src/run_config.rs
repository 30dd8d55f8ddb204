//! Provenance block embedded in every report.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::GENERATOR_NAME;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool: String,
    pub version: String,
    pub generator: String,
    pub subcommand: String,
    pub flags: BTreeMap<String, serde_json::Value>,
    pub master_seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

impl RunConfig {
    pub fn new(tool: &str, version: &str, subcommand: &str) -> Self {
        RunConfig {
            tool: tool.into(),
            version: version.into(),
            generator: GENERATOR_NAME.into(),
            subcommand: subcommand.into(),
            flags: BTreeMap::new(),
            master_seed: None,
            inputs: Vec::new(),
        }
    }

    pub fn flag(mut self, name: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.flags.insert(name.into(), v);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.master_seed = Some(seed);
        self
    }

    /// Records the digest of a file, or of every file under a directory.
    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: digest_path(path)?,
        });
        Ok(self)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 of a file; for a directory, of every file's relative path and
/// contents in sorted path order.
pub fn digest_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
        }
    } else {
        hasher.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    Ok(hex::encode(hasher.finalize()))
}
