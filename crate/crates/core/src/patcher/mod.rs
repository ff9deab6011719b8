//! Patch sampling and labeling.
//!
//! Patches are square crops whose origins are drawn uniformly over the tissue
//! bounding box. On a tumor slide a patch is positive when its central
//! half-size window holds at least one annotated tumor pixel and negative when
//! the whole patch holds none; patches with tumor only in the outer ring are
//! rejected as ambiguous. Every patch from a normal slide is negative-normal.

mod folds;
mod store;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};
use crate::mask::{BinaryMask, MaskIntegral};
use crate::seed::derive_seed;
use crate::slide_store::{AnnotationMask, Slide, SlideLabel};

pub use folds::{assign_folds, FoldAssignment};
pub use store::{read_patch_set, write_patch_set, PatchRecord, PatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchLabel {
    PositiveTumor,
    NegativeTumor,
    NegativeNormal,
}

impl PatchLabel {
    pub const ALL: [PatchLabel; 3] = [
        PatchLabel::PositiveTumor,
        PatchLabel::NegativeTumor,
        PatchLabel::NegativeNormal,
    ];

    /// Binary training target: 1 for tumor-containing patches.
    pub fn class_index(self) -> usize {
        usize::from(self == PatchLabel::PositiveTumor)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PatchLabel::PositiveTumor => "positive_tumor",
            PatchLabel::NegativeTumor => "negative_tumor",
            PatchLabel::NegativeNormal => "negative_normal",
        }
    }
}

impl std::fmt::Display for PatchLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    pub size: u32,
    pub label: PatchLabel,
    pub pixels: RgbImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTargets {
    pub positive_tumor: usize,
    pub negative_tumor: usize,
    pub negative_normal: usize,
}

impl ClassTargets {
    pub fn equal(n: usize) -> Self {
        ClassTargets {
            positive_tumor: n,
            negative_tumor: n,
            negative_normal: n,
        }
    }

    pub fn get(&self, label: PatchLabel) -> usize {
        match label {
            PatchLabel::PositiveTumor => self.positive_tumor,
            PatchLabel::NegativeTumor => self.negative_tumor,
            PatchLabel::NegativeNormal => self.negative_normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub patch_size: u32,
    pub targets: ClassTargets,
    pub min_tissue_fraction: f64,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            patch_size: 64,
            targets: ClassTargets::equal(100),
            min_tissue_fraction: 0.8,
            seed: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(invariant!("patch size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.min_tissue_fraction) {
            return Err(invariant!(
                "min tissue fraction {} outside [0, 1]",
                self.min_tissue_fraction
            ));
        }
        Ok(())
    }
}

/// Labels patches of one slide in O(1) each using summed-area tables.
pub struct PatchLabeler {
    width: u32,
    height: u32,
    size: u32,
    slide_label: SlideLabel,
    min_tissue_fraction: f64,
    tumor: Option<MaskIntegral>,
    tissue: MaskIntegral,
}

impl PatchLabeler {
    pub fn new(
        slide: &Slide,
        tumor_mask: Option<&AnnotationMask>,
        tissue: &BinaryMask,
        size: u32,
        min_tissue_fraction: f64,
    ) -> Result<Self> {
        if tissue.dimensions() != slide.dimensions() {
            return Err(invariant!(
                "tissue mask {:?} does not match slide {} {:?}",
                tissue.dimensions(),
                slide.id(),
                slide.dimensions()
            ));
        }
        if let Some(m) = tumor_mask {
            if m.mask.dimensions() != slide.dimensions() {
                return Err(invariant!(
                    "tumor mask {:?} does not match slide {} {:?}",
                    m.mask.dimensions(),
                    slide.id(),
                    slide.dimensions()
                ));
            }
        }
        if slide.label() == SlideLabel::Tumor && tumor_mask.is_none() {
            return Err(invariant!("tumor slide {} needs a tumor mask", slide.id()));
        }
        if size > slide.width() || size > slide.height() {
            return Err(invariant!(
                "patch size {size} exceeds slide {} {:?}",
                slide.id(),
                slide.dimensions()
            ));
        }
        Ok(PatchLabeler {
            width: slide.width(),
            height: slide.height(),
            size,
            slide_label: slide.label(),
            min_tissue_fraction,
            tumor: tumor_mask.map(|m| MaskIntegral::new(&m.mask)),
            tissue: MaskIntegral::new(tissue),
        })
    }

    /// The label for the patch at `(x, y)`, or `None` when it is rejected.
    pub fn label(&self, x: u32, y: u32) -> Result<Option<PatchLabel>> {
        let s = self.size;
        if x + s > self.width || y + s > self.height {
            return Err(invariant!("patch at ({x},{y}) size {s} leaves the slide"));
        }
        let tissue = self.tissue.count(x, y, s, s) as f64 / f64::from(s * s);
        if tissue < self.min_tissue_fraction {
            return Ok(None);
        }
        Ok(match (self.slide_label, &self.tumor) {
            (SlideLabel::Normal, _) => Some(PatchLabel::NegativeNormal),
            (SlideLabel::Tumor, None) => unreachable!("checked in constructor"),
            (SlideLabel::Tumor, Some(tumor)) => {
                let (cx, cy, cs) = central_window(x, y, s);
                if tumor.count(cx, cy, cs, cs) > 0 {
                    Some(PatchLabel::PositiveTumor)
                } else if tumor.count(x, y, s, s) == 0 {
                    Some(PatchLabel::NegativeTumor)
                } else {
                    None
                }
            }
        })
    }
}

/// Central `size/2` window of a patch: `(x, y, side)`.
pub fn central_window(x: u32, y: u32, size: u32) -> (u32, u32, u32) {
    let side = (size / 2).max(1);
    let off = (size - side) / 2;
    (x + off, y + off, side)
}

/// One-off labeling; see [`PatchLabeler`] for repeated use.
pub fn label_patch(
    slide: &Slide,
    x: u32,
    y: u32,
    size: u32,
    tumor_mask: Option<&AnnotationMask>,
    tissue: &BinaryMask,
    min_tissue_fraction: f64,
) -> Result<Option<PatchLabel>> {
    PatchLabeler::new(slide, tumor_mask, tissue, size, min_tissue_fraction)?.label(x, y)
}

/// Inclusive range of valid origins along one axis for patches centered in
/// the tissue bounding box.
fn origin_range(lo: u32, hi: u32, size: u32, extent: u32) -> (u32, u32) {
    let max_origin = extent - size;
    let a = lo.saturating_sub(size / 2).min(max_origin);
    let b = (hi + 1).saturating_sub(size / 2 + size % 2).clamp(a, max_origin);
    (a, b)
}

/// Rejection-samples labeled patches from one slide until every applicable
/// class reaches its target or the attempt budget (100 × total target) runs
/// out. Fails when any class ends below half its target.
pub fn extract_patches(
    slide: &Slide,
    tumor_mask: Option<&AnnotationMask>,
    tissue: &BinaryMask,
    config: &ExtractionConfig,
) -> Result<Vec<Patch>> {
    config.validate()?;
    let labeler = PatchLabeler::new(
        slide,
        tumor_mask,
        tissue,
        config.patch_size,
        config.min_tissue_fraction,
    )?;
    let classes: &[PatchLabel] = match slide.label() {
        SlideLabel::Tumor => &[PatchLabel::PositiveTumor, PatchLabel::NegativeTumor],
        SlideLabel::Normal => &[PatchLabel::NegativeNormal],
    };
    let total: usize = classes.iter().map(|&c| config.targets.get(c)).sum();
    if total == 0 {
        return Ok(Vec::new());
    }
    let Some((x0, y0, x1, y1)) = tissue.bounding_box() else {
        return Err(invariant!("slide {} has no tissue", slide.id()));
    };
    let size = config.patch_size;
    let (ax, bx) = origin_range(x0, x1, size, slide.width());
    let (ay, by) = origin_range(y0, y1, size, slide.height());

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, slide.id()));
    let mut counts = [0usize; 3];
    let mut patches = Vec::with_capacity(total);
    let budget = total.saturating_mul(100);
    for _ in 0..budget {
        if patches.len() == total {
            break;
        }
        let x = rng.random_range(ax..=bx);
        let y = rng.random_range(ay..=by);
        let Some(label) = labeler.label(x, y)? else {
            continue;
        };
        let slot = label as usize;
        if counts[slot] >= config.targets.get(label) {
            continue;
        }
        counts[slot] += 1;
        patches.push(Patch {
            slide_id: slide.id().to_owned(),
            x,
            y,
            size,
            label,
            pixels: slide.read_region(x, y, size, size)?,
        });
    }
    for &class in classes {
        let target = config.targets.get(class);
        if counts[class as usize] * 2 < target {
            return Err(Error::Invariant(format!(
                "slide {}: only {} of {} {class} patches found within the attempt budget",
                slide.id(),
                counts[class as usize],
                target
            )));
        }
    }
    Ok(patches)
}
