//! Artifact files: JSON-lines datasets with a schema sidecar, JSON models
//! and reports, and SHA-256 digests.
//!
//! Every write goes to a temporary sibling first and is renamed into place,
//! so a failed stage never leaves a partial file behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugmentedDataset, DemoRecord, DATASET_VERSION};
use crate::error::IoError;
use crate::observation::{feature_schema, FeatureSpec};

pub const DATASET_FORMAT: &str = "cfdriver-dataset";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.display().to_string(), message: message.into() }
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Sidecar describing a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub format: String,
    pub version: u32,
    pub n_records: usize,
    pub n_original: usize,
    pub n_cf: usize,
    pub filtered_obs: Vec<FeatureSpec>,
}

impl DatasetSchema {
    pub fn for_dataset(ds: &AugmentedDataset) -> Self {
        let (n_original, n_cf) = ds.counts();
        DatasetSchema {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            n_records: ds.records.len(),
            n_original,
            n_cf,
            filtered_obs: feature_schema(),
        }
    }
}

pub fn schema_path(dataset: &Path) -> PathBuf {
    let mut p = dataset.as_os_str().to_owned();
    p.push(".schema.json");
    PathBuf::from(p)
}

/// Decodes one dataset line.
pub fn parse_record_line(line: &str) -> Result<DemoRecord, String> {
    let r: DemoRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    r.validate()?;
    Ok(r)
}

pub fn record_line(r: &DemoRecord) -> String {
    serde_json::to_string(r).expect("record serializes")
}

/// Decodes a whole JSON-lines document. Blank lines are skipped; errors
/// carry the 1-based line number.
pub fn parse_records(text: &str) -> Result<Vec<DemoRecord>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record_line(line).map_err(|m| (i + 1, m))?);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, ds: &AugmentedDataset) -> Result<(), IoError> {
    let mut text = String::new();
    for r in &ds.records {
        text.push_str(&record_line(r));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())?;
    write_json(&schema_path(path), &DatasetSchema::for_dataset(ds))
}

/// Reads a dataset and checks it against its sidecar when one exists.
pub fn read_dataset(path: &Path) -> Result<AugmentedDataset, IoError> {
    let text = read_text(path)?;
    let records = parse_records(&text).map_err(|(line, message)| IoError::Parse {
        path: path.display().to_string(),
        line,
        message,
    })?;
    let ds = AugmentedDataset { records };
    let sidecar = schema_path(path);
    if sidecar.exists() {
        let schema: DatasetSchema = read_json(&sidecar)?;
        if schema.format != DATASET_FORMAT || schema.version != DATASET_VERSION {
            return Err(format_err(&sidecar, format!("unsupported dataset {} v{}", schema.format, schema.version)));
        }
        let expect = DatasetSchema::for_dataset(&ds);
        if schema != expect {
            return Err(format_err(&sidecar, "schema does not match the dataset contents"));
        }
    }
    Ok(ds)
}
