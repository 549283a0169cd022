//! JSON file helpers shared by every on-disk format.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid JSON: {0}")]
    Inline(#[from] serde_json::Error),
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T, JsonFileError> {
    let text = fs::read_to_string(path).map_err(|source| JsonFileError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| JsonFileError::Parse {
        path: path.to_owned(),
        source,
    })
}

pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<(), JsonFileError> {
    let mut text = to_pretty(value);
    text.push('\n');
    fs::write(path, text).map_err(|source| JsonFileError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("in-memory JSON serialization")
}

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn serialize_vec3_sig9<S: Serializer>(v: &[f64; 3], s: S) -> Result<S::Ok, S::Error> {
    [round_sig9(v[0]), round_sig9(v[1]), round_sig9(v[2])].serialize(s)
}
