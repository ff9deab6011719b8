//! `run.json`: what ran, with which settings, and the digest of everything
//! it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wsi_triage::{Error, Result};

use crate::args::Command;

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
    /// False for outputs that embed wall-clock timings.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub config: Command,
    pub artifacts: Vec<Artifact>,
    pub elapsed_ms: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 of a file, or of a directory as the sorted list of
/// `(relative path, file digest)` pairs.
pub fn digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        files_under(path, &mut files)?;
        let mut rel: Vec<(String, PathBuf)> = files
            .into_iter()
            .map(|f| {
                let r = f.strip_prefix(path).expect("under dir").to_string_lossy().replace('\\', "/");
                (r, f)
            })
            .collect();
        rel.sort();
        let mut h = Sha256::new();
        for (r, f) in rel {
            h.update(r.as_bytes());
            h.update([0]);
            h.update(digest(&f)?.as_bytes());
            h.update([b'\n']);
        }
        Ok(hex(&h.finalize()))
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

pub fn artifact(out_dir: &Path, rel: impl Into<PathBuf>, deterministic: bool) -> Result<Artifact> {
    let path = rel.into();
    Ok(Artifact {
        sha256: digest(&out_dir.join(&path))?,
        path,
        deterministic,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
