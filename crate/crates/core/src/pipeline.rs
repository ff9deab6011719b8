//! Dataset-level plumbing: synthetic corpora on disk, slide loading with
//! tissue detection and standardization, and patch-set extraction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invariant, Result};
use crate::mask::BinaryMask;
use crate::patcher::{extract_patches, ExtractionConfig, PatchSet};
use crate::preprocess::{pooled_color_stats, standardize_slide, tissue_mask_image, ColorTemplate, TissueConfig};
use crate::seed::derive_seed;
use crate::slide_store::{
    generate_synthetic_slide, read_manifest, read_mask, read_slide, write_manifest, write_mask, write_slide,
    AnnotationMask, DatasetManifest, ManifestEntry, Slide, SlideLabel, SyntheticSlideSpec,
};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A family of synthetic slides. Tumor slides draw their nodule count from
/// `nodule_count`; normal slides have none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub tumor_slides: usize,
    pub normal_slides: usize,
    pub slide: SyntheticSlideSpec,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    String::new()
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            tumor_slides: 10,
            normal_slides: 10,
            slide: SyntheticSlideSpec::default(),
            seed: 0,
            id_prefix: default_prefix(),
        }
    }
}

impl CorpusSpec {
    /// Per-slide specs in manifest order: tumor slides first.
    pub fn slide_specs(&self) -> Vec<SyntheticSlideSpec> {
        let tumor = (0..self.tumor_slides).map(|i| (format!("{}tumor_{i:03}", self.id_prefix), true));
        let normal = (0..self.normal_slides).map(|i| (format!("{}normal_{i:03}", self.id_prefix), false));
        tumor
            .chain(normal)
            .map(|(id, is_tumor)| SyntheticSlideSpec {
                seed: derive_seed(self.seed, &id),
                tumor_nodule_count: if is_tumor { self.slide.tumor_nodule_count.max(1) } else { 0 },
                id,
                ..self.slide.clone()
            })
            .collect()
    }
}

/// Writes `slides/<id>/`, `masks/<id>.png` and `manifest.json` (relative
/// paths) under `dir`.
pub fn write_corpus(spec: &CorpusSpec, dir: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for s in spec.slide_specs() {
        let (slide, mask) = generate_synthetic_slide(&s)?;
        let slide_rel = PathBuf::from("slides").join(&s.id);
        write_slide(&slide, &dir.join(&slide_rel))?;
        let mask_rel = match slide.label() {
            SlideLabel::Tumor => {
                let rel = PathBuf::from("masks").join(format!("{}.png", s.id));
                write_mask(&mask, &dir.join(&rel))?;
                Some(rel)
            }
            SlideLabel::Normal => None,
        };
        entries.push(ManifestEntry {
            slide: slide_rel,
            mask: mask_rel,
            label: slide.label(),
        });
    }
    let manifest = DatasetManifest {
        seed: spec.seed,
        entries,
    };
    write_manifest(&manifest, &dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Reads a manifest and resolves its relative paths against its directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let m = read_manifest(path)?;
    Ok(m.resolved(path.parent().unwrap_or(Path::new("."))))
}

/// A slide with its ground truth and detected tissue.
#[derive(Debug, Clone)]
pub struct LoadedSlide {
    pub slide: Slide,
    pub mask: Option<AnnotationMask>,
    pub tissue: BinaryMask,
}

impl LoadedSlide {
    pub fn new(slide: Slide, mask: Option<AnnotationMask>, tissue_config: &TissueConfig) -> Result<Self> {
        if let Some(m) = &mask {
            m.validate_for(&slide)?;
        } else if slide.label() == SlideLabel::Tumor {
            return Err(invariant!("tumor slide {} has no mask", slide.id()));
        }
        let tissue = tissue_mask_image(&slide.to_image(), tissue_config)?;
        Ok(LoadedSlide { slide, mask, tissue })
    }

    /// Standardizes tissue pixels to `template` in place.
    pub fn standardize(&mut self, template: &ColorTemplate) -> Result<()> {
        self.slide = standardize_slide(&self.slide, &self.tissue, template)?;
        Ok(())
    }
}

pub fn load_entry(entry: &ManifestEntry, tissue_config: &TissueConfig) -> Result<LoadedSlide> {
    let id = entry.slide_id();
    let slide = read_slide(&entry.slide)?;
    if slide.id() != id {
        return Err(invariant!("slide at {} has id {}, manifest expects {id}", entry.slide.display(), slide.id()));
    }
    if slide.label() != entry.label {
        return Err(invariant!("slide {id} is labeled {} on disk but {} in the manifest", slide.label(), entry.label));
    }
    let mask = entry.mask.as_deref().map(|p| read_mask(p, &id)).transpose()?;
    LoadedSlide::new(slide, mask, tissue_config)
}

pub fn load_slides(manifest: &DatasetManifest, tissue_config: &TissueConfig) -> Result<Vec<LoadedSlide>> {
    manifest.validate()?;
    manifest.entries.iter().map(|e| load_entry(e, tissue_config)).collect()
}

/// Pooled HSV statistics over every slide's tissue.
pub fn dataset_template(slides: &[LoadedSlide]) -> Result<ColorTemplate> {
    let images: Vec<_> = slides.iter().map(|s| s.slide.to_image()).collect();
    pooled_color_stats(images.iter().zip(slides.iter().map(|s| &s.tissue)))
}

/// How slide colors are normalized before patching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "template")]
pub enum Standardization {
    Off,
    /// Template pooled from the dataset itself.
    Pooled,
    Fixed(ColorTemplate),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchingConfig {
    pub extraction: ExtractionConfig,
    pub tissue: TissueConfig,
    pub standardization: Standardization,
}

/// Extracts patches from every slide, after optional standardization.
pub fn extract_dataset(slides: &mut [LoadedSlide], config: &PatchingConfig) -> Result<PatchSet> {
    let template = match config.standardization {
        Standardization::Off => None,
        Standardization::Pooled => Some(dataset_template(slides)?),
        Standardization::Fixed(t) => Some(t),
    };
    let mut patches = Vec::new();
    for s in slides.iter_mut() {
        if let Some(t) = &template {
            s.standardize(t)?;
        }
        patches.extend(extract_patches(&s.slide, s.mask.as_ref(), &s.tissue, &config.extraction)?);
    }
    Ok(PatchSet {
        patch_size: config.extraction.patch_size,
        template,
        patches,
    })
}

pub fn patch_manifest(manifest: &DatasetManifest, config: &PatchingConfig) -> Result<PatchSet> {
    let mut slides = load_slides(manifest, &config.tissue)?;
    extract_dataset(&mut slides, config)
}
