use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Incremental content hash over strings, values, files and directories.
#[derive(Default)]
pub struct ContentHash(Sha256);

impl ContentHash {
    pub fn new(tag: &str) -> Self {
        let mut h = Self::default();
        h.str(tag);
        h
    }

    fn chunk(&mut self, bytes: &[u8]) {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.chunk(s.as_bytes());
        self
    }

    pub fn json<T: Serialize>(&mut self, value: &T) -> &mut Self {
        let s = serde_json::to_string(value).expect("serializable value");
        self.str(&s)
    }

    pub fn file(&mut self, path: &Path) -> Result<&mut Self> {
        let digest = file_sha256(path)?;
        Ok(self.str(&digest))
    }

    /// Every regular file directly inside `dir`, by sorted name.
    pub fn dir(&mut self, dir: &Path) -> Result<&mut Self> {
        for path in list_files(dir)? {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            self.str(&name);
            self.file(&path)?;
        }
        Ok(self)
    }

    pub fn finish(self) -> String {
        format!("{:x}", self.0.finalize())
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if entry.file_type().map_err(|e| CliError::io(entry.path(), e))?.is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Record of a completed stage: what went in and what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub input_hash: String,
    /// Output path relative to the run directory, mapped to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

impl StageManifest {
    pub fn record(stage: &str, input_hash: String, root: &Path, outputs: &[PathBuf]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in outputs {
            let rel = p.strip_prefix(root).unwrap_or(p).to_string_lossy().into_owned();
            map.insert(rel, file_sha256(p)?);
        }
        Ok(Self {
            stage: stage.to_string(),
            input_hash,
            outputs: map,
        })
    }

    /// True when the inputs match and every output is still on disk unchanged.
    pub fn is_current(&self, input_hash: &str, root: &Path) -> bool {
        self.input_hash == input_hash
            && self
                .outputs
                .iter()
                .all(|(rel, sha)| file_sha256(&root.join(rel)).is_ok_and(|s| &s == sha))
    }
}
