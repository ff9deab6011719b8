use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SlideLabel;
use crate::error::{invariant, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slide: PathBuf,
    pub mask: Option<PathBuf>,
    pub label: SlideLabel,
}

impl ManifestEntry {
    /// Slide id: the directory name, or the file stem for flat images.
    pub fn slide_id(&self) -> String {
        let name = if self.slide.extension().is_some() {
            self.slide.file_stem()
        } else {
            self.slide.file_name()
        };
        name.map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// The list of slides making up a dataset. Relative paths are resolved
/// against the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for entry in &self.entries {
            let id = entry.slide_id();
            if !seen.insert(id.clone()) {
                return Err(invariant!("duplicate slide id {id:?} in manifest"));
            }
            if entry.label == SlideLabel::Tumor && entry.mask.is_none() {
                return Err(invariant!("tumor slide {id:?} has no mask"));
            }
        }
        Ok(())
    }

    /// Rewrites relative paths so they resolve from `base`.
    pub fn resolved(&self, base: &Path) -> DatasetManifest {
        let fix = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        DatasetManifest {
            seed: self.seed,
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    slide: fix(&e.slide),
                    mask: e.mask.as_deref().map(fix),
                    label: e.label,
                })
                .collect(),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
