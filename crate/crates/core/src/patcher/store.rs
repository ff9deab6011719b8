//! On-disk patch sets: `patches.json` plus one PNG per patch.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Patch, PatchLabel};
use crate::error::{invariant, Error, Result};
use crate::preprocess::ColorTemplate;

const INDEX_FILE: &str = "patches.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    pub size: u32,
    pub label: PatchLabel,
    pub file: String,
}

/// A labeled patch collection and the color template its slides were
/// standardized to, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patch_size: u32,
    pub template: Option<ColorTemplate>,
    pub patches: Vec<Patch>,
}

#[derive(Serialize, Deserialize)]
struct Index {
    patch_size: u32,
    template: Option<ColorTemplate>,
    records: Vec<PatchRecord>,
}

pub fn write_patch_set(set: &PatchSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(set.patches.len());
    for (i, p) in set.patches.iter().enumerate() {
        let file = format!("patch_{i:06}.png");
        let path = dir.join(&file);
        p.pixels.save(&path).map_err(|e| Error::image(&path, e))?;
        records.push(PatchRecord {
            slide_id: p.slide_id.clone(),
            x: p.x,
            y: p.y,
            size: p.size,
            label: p.label,
            file,
        });
    }
    let index = Index {
        patch_size: set.patch_size,
        template: set.template,
        records,
    };
    let path = dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_patch_set(dir: &Path) -> Result<PatchSet> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: Index = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut patches = Vec::with_capacity(index.records.len());
    for r in index.records {
        let p = dir.join(&r.file);
        let pixels = match image::open(&p).map_err(|e| Error::image(&p, e))? {
            image::DynamicImage::ImageRgb8(img) => img,
            other => {
                return Err(invariant!("{}: expected RGB8, found {:?}", p.display(), other.color()))
            }
        };
        if pixels.dimensions() != (r.size, r.size) || r.size != index.patch_size {
            return Err(invariant!(
                "{}: patch is {:?}, index says {}",
                p.display(),
                pixels.dimensions(),
                r.size
            ));
        }
        patches.push(Patch {
            slide_id: r.slide_id,
            x: r.x,
            y: r.y,
            size: r.size,
            label: r.label,
            pixels,
        });
    }
    Ok(PatchSet {
        patch_size: index.patch_size,
        template: index.template,
        patches,
    })
}
