//! Flat archive of named arrays.
//!
//! An archive is a directory holding two files:
//!
//! * `arrays.bin` — every array's values back to back, each value a
//!   little-endian IEEE-754 `f64`, in manifest order;
//! * `manifest.json` — `{"format": "mirrorfield-archive", "version": 1,
//!   "metadata": {...}, "arrays": [{"name", "shape", "offset", "len"}]}`
//!   where `offset` and `len` count values (not bytes) into `arrays.bin`.
//!
//! `metadata` is a free-form JSON object owned by the caller (checkpoints
//! store the config hash and iteration there).

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ARCHIVE_VERSION: u32 = 1;
const FORMAT: &str = "mirrorfield-archive";
const MANIFEST_FILE: &str = "manifest.json";
const DATA_FILE: &str = "arrays.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArrayRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArchiveManifest {
    pub format: String,
    pub version: u32,
    pub metadata: serde_json::Value,
    pub arrays: Vec<ArrayRecord>,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive i/o at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("archive manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("archive is malformed: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_archive(
    dir: &Path,
    entries: &[ArchiveEntry],
    metadata: serde_json::Value,
) -> Result<(), ArchiveError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut bytes = Vec::with_capacity(entries.iter().map(|e| e.values.len() * 8).sum());
    let mut arrays = Vec::with_capacity(entries.len());
    let mut offset = 0;
    for e in entries {
        if e.shape.iter().product::<usize>() != e.values.len() {
            return Err(ArchiveError::Malformed(format!(
                "array {} has shape {:?} but {} values",
                e.name,
                e.shape,
                e.values.len()
            )));
        }
        for v in &e.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        arrays.push(ArrayRecord {
            name: e.name.clone(),
            shape: e.shape.clone(),
            offset,
            len: e.values.len(),
        });
        offset += e.values.len();
    }
    let manifest = ArchiveManifest {
        format: FORMAT.into(),
        version: ARCHIVE_VERSION,
        metadata,
        arrays,
    };
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, &bytes).map_err(io_err(&data_path))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(())
}

pub fn read_archive(dir: &Path) -> Result<(ArchiveManifest, Vec<ArchiveEntry>), ArchiveError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: ArchiveManifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(ArchiveError::Malformed(format!(
            "unexpected format tag {:?}",
            manifest.format
        )));
    }
    if manifest.version != ARCHIVE_VERSION {
        return Err(ArchiveError::Malformed(format!(
            "unsupported version {}",
            manifest.version
        )));
    }
    let data_path = dir.join(DATA_FILE);
    let bytes = fs::read(&data_path).map_err(io_err(&data_path))?;
    if bytes.len() % 8 != 0 {
        return Err(ArchiveError::Malformed("data length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut entries = Vec::with_capacity(manifest.arrays.len());
    for rec in &manifest.arrays {
        let end = rec.offset + rec.len;
        if end > values.len() || rec.shape.iter().product::<usize>() != rec.len {
            return Err(ArchiveError::Malformed(format!("bad extent for array {}", rec.name)));
        }
        entries.push(ArchiveEntry {
            name: rec.name.clone(),
            shape: rec.shape.clone(),
            values: values[rec.offset..end].to_vec(),
        });
    }
    Ok((manifest, entries))
}
