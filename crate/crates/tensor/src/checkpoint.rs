//! Checkpoint directories: a `meta.json` manifest plus one little-endian
//! f32 blob per parameter tensor.
//!
//! Values are stored at f32 precision; optimizer state is not persisted, so
//! a loaded store starts with fresh Adam moments.

use crate::store::ParamStore;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const META_FILE: &str = "meta.json";

#[derive(Debug)]
pub enum CheckpointError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Meta {
        path: PathBuf,
        msg: String,
    },
    Blob {
        path: PathBuf,
        msg: String,
    },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io { path, source } => {
                write!(f, "checkpoint i/o error at {}: {source}", path.display())
            }
            CheckpointError::Meta { path, msg } => {
                write!(f, "malformed checkpoint meta {}: {msg}", path.display())
            }
            CheckpointError::Blob { path, msg } => {
                write!(f, "bad parameter file {}: {msg}", path.display())
            }
        }
    }
}

impl std::error::Error for CheckpointError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CheckpointError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Optimizer steps taken when the checkpoint was written.
    pub step: u64,
    /// Seed the parameter store was created with.
    pub seed: u64,
    /// Free-form model/run configuration, embedded verbatim.
    pub config: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Atomically writes `bytes` to `path` via a sibling temp file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path)
        .map_err(|e| CheckpointError::Io {
            path: path.to_path_buf(),
            source: e.error,
        })?;
    Ok(())
}

fn blob_file_name(param: &str) -> String {
    format!("{param}.f32")
}

/// Writes `store` to `dir` (created if missing): every tensor as an LE f32
/// blob named after the parameter, and a manifest with shapes, step, seed,
/// and the caller's config.
pub fn save_checkpoint(
    dir: &Path,
    store: &ParamStore,
    config: &serde_json::Value,
) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut records = Vec::with_capacity(store.len());
    for (name, entry) in store.iter() {
        let file = blob_file_name(name);
        let mut bytes = Vec::with_capacity(entry.data.len() * 4);
        for &v in &entry.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        write_atomic(&dir.join(&file), &bytes)?;
        records.push(ParamRecord {
            name: name.clone(),
            shape: entry.shape.clone(),
            file,
        });
    }
    let meta = CheckpointMeta {
        step: store.step,
        seed: store.seed(),
        config: config.clone(),
        params: records,
    };
    let meta_path = dir.join(META_FILE);
    let body = serde_json::to_vec_pretty(&meta).map_err(|e| CheckpointError::Meta {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    write_atomic(&meta_path, &body)
}

/// Reads a checkpoint directory back into a [`ParamStore`] (fresh optimizer
/// state) plus its manifest. Errors name the offending file.
pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, CheckpointMeta), CheckpointError> {
    let meta_path = dir.join(META_FILE);
    let body = fs::read(&meta_path).map_err(io_err(&meta_path))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&body).map_err(|e| CheckpointError::Meta {
            path: meta_path.clone(),
            msg: e.to_string(),
        })?;
    let mut store = ParamStore::new(meta.seed);
    store.step = meta.step;
    for rec in &meta.params {
        let blob_path = dir.join(&rec.file);
        let bytes = fs::read(&blob_path).map_err(io_err(&blob_path))?;
        let expect = rec.shape.iter().product::<usize>() * 4;
        if bytes.len() != expect {
            return Err(CheckpointError::Blob {
                path: blob_path,
                msg: format!(
                    "expected {expect} bytes for shape {:?}, got {}",
                    rec.shape,
                    bytes.len()
                ),
            });
        }
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        store.insert_loaded(&rec.name, rec.shape.clone(), data);
    }
    Ok((store, meta))
}
