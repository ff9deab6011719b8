//! Synthetic H&E-like slides with known tissue and tumor geometry.
//!
//! Background is near-white, tissue is an irregular eosin-pink blob and tumor
//! nodules are hematoxylin-purple discs with a denser, darker texture. Every
//! pixel gets independent uniform noise.

use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationMask, Slide, SlideLabel};
use crate::error::{invariant, Result};
use crate::mask::BinaryMask;

const BACKGROUND: [f64; 3] = [245.0, 245.0, 245.0];
const BACKGROUND_NOISE: f64 = 5.0;
const TISSUE: [f64; 3] = [230.0, 160.0, 200.0];
const TUMOR: [f64; 3] = [120.0, 60.0, 160.0];
const STAIN_NOISE: f64 = 15.0;
const NUCLEUS_PROBABILITY: f64 = 0.2;
const NUCLEUS_DARKENING: f64 = 0.75;
const EDGE_BAND_PX: f64 = 3.0;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSlideSpec {
    #[serde(default = "default_id")]
    pub id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub tile_size: u32,
    /// Target fraction of the slide covered by tissue, in (0, 1].
    pub tissue_fraction: f64,
    pub tumor_nodule_count: u32,
    /// Inclusive radius range for nodules.
    pub tumor_nodule_radius_px: (u32, u32),
    pub seed: u64,
}

fn default_id() -> String {
    "synthetic".to_owned()
}

impl Default for SyntheticSlideSpec {
    fn default() -> Self {
        SyntheticSlideSpec {
            id: default_id(),
            width_px: 1024,
            height_px: 1024,
            tile_size: 256,
            tissue_fraction: 0.5,
            tumor_nodule_count: 3,
            tumor_nodule_radius_px: (40, 60),
            seed: 0,
        }
    }
}

impl SyntheticSlideSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 || self.tile_size == 0 {
            return Err(invariant!("synthetic slide dimensions must be positive"));
        }
        if !(self.tissue_fraction > 0.0 && self.tissue_fraction <= 1.0) {
            return Err(invariant!(
                "tissue fraction {} outside (0, 1]",
                self.tissue_fraction
            ));
        }
        let (lo, hi) = self.tumor_nodule_radius_px;
        if lo == 0 || lo > hi {
            return Err(invariant!("nodule radius range ({lo}, {hi}) is invalid"));
        }
        Ok(())
    }

    pub fn label(&self) -> SlideLabel {
        if self.tumor_nodule_count > 0 {
            SlideLabel::Tumor
        } else {
            SlideLabel::Normal
        }
    }
}

/// A generated slide together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSlide {
    pub slide: Slide,
    pub mask: AnnotationMask,
    /// Exact tissue footprint, tumor included.
    pub tissue: BinaryMask,
}

pub fn generate_synthetic_slide(spec: &SyntheticSlideSpec) -> Result<(Slide, AnnotationMask)> {
    let s = generate_synthetic_slide_with_tissue(spec)?;
    Ok((s.slide, s.mask))
}

struct TissueShape {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    // (amplitude, frequency, phase) of the boundary wobble
    wobble: Vec<(f64, f64, f64)>,
}

impl TissueShape {
    fn sample(spec: &SyntheticSlideSpec, rng: &mut ChaCha8Rng) -> Self {
        let (w, h) = (f64::from(spec.width_px), f64::from(spec.height_px));
        let area = spec.tissue_fraction * w * h;
        let aspect = rng.random_range(0.8..1.25) * (w / h);
        let a = (area * aspect / PI).sqrt();
        let b = (area / (aspect * PI)).sqrt();
        let cx = w / 2.0 + rng.random_range(-0.05..0.05) * w;
        let cy = h / 2.0 + rng.random_range(-0.05..0.05) * h;
        let wobble = (2..=4)
            .map(|k| {
                (
                    rng.random_range(0.0..0.05),
                    f64::from(k),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        TissueShape {
            cx,
            cy,
            a,
            b,
            wobble,
        }
    }

    /// Normalized radial coordinate; ≤ 1 inside the tissue.
    fn rho(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.cx) / self.a;
        let dy = (y - self.cy) / self.b;
        let theta = dy.atan2(dx);
        let boundary: f64 = 1.0
            + self
                .wobble
                .iter()
                .map(|&(amp, k, phase)| amp * (k * theta + phase).sin())
                .sum::<f64>();
        (dx * dx + dy * dy).sqrt() / boundary
    }
}

fn noisy(base: [f64; 3], amp: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut px = base;
    for c in &mut px {
        *c += rng.random_range(-amp..=amp);
    }
    px
}

fn to_rgb(px: [f64; 3]) -> Rgb<u8> {
    Rgb(px.map(|c| c.round().clamp(0.0, 255.0) as u8))
}

pub fn generate_synthetic_slide_with_tissue(spec: &SyntheticSlideSpec) -> Result<SyntheticSlide> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width_px, spec.height_px);
    let shape = TissueShape::sample(spec, &mut rng);
    let mut rho = vec![0f64; w as usize * h as usize];
    for y in 0..h {
        for x in 0..w {
            rho[(y * w + x) as usize] = shape.rho(f64::from(x) + 0.5, f64::from(y) + 0.5);
        }
    }
    let tissue = BinaryMask::from_fn(w, h, |x, y| rho[(y * w + x) as usize] <= 1.0);
    let mut tumor = BinaryMask::new(w, h);

    let (rmin, rmax) = spec.tumor_nodule_radius_px;
    let bbox = tissue.bounding_box();
    for n in 0..spec.tumor_nodule_count {
        let Some((x0, y0, x1, y1)) = bbox else {
            return Err(invariant!("no tissue to place tumor nodules in"));
        };
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let r = rng.random_range(rmin..=rmax);
            let cx = rng.random_range(x0..=x1);
            let cy = rng.random_range(y0..=y1);
            if let Some(pixels) = disc_if_free(&tissue, &tumor, cx, cy, r) {
                for (px, py) in pixels {
                    tumor.set(px, py, true);
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(invariant!(
                "could not place tumor nodule {} of {} after {PLACEMENT_ATTEMPTS} attempts; \
                 tissue too small for radius {rmin}..={rmax}",
                n + 1,
                spec.tumor_nodule_count
            ));
        }
    }

    let band = EDGE_BAND_PX / shape.a.min(shape.b);
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let px = if tumor.get(x, y) {
                let mut px = noisy(TUMOR, STAIN_NOISE, &mut rng);
                if rng.random_bool(NUCLEUS_PROBABILITY) {
                    px = px.map(|c| c * NUCLEUS_DARKENING);
                }
                px
            } else if tissue.get(x, y) {
                noisy(TISSUE, STAIN_NOISE, &mut rng)
            } else {
                let bg = noisy(BACKGROUND, BACKGROUND_NOISE, &mut rng);
                let excess = rho[i] - 1.0;
                if excess < band {
                    // faint stain bleeding just outside the tissue edge
                    let alpha = 0.5 * (1.0 - excess / band);
                    let mut mixed = [0.0; 3];
                    for c in 0..3 {
                        mixed[c] = alpha * TISSUE[c] + (1.0 - alpha) * bg[c];
                    }
                    mixed
                } else {
                    bg
                }
            };
            img.put_pixel(x, y, to_rgb(px));
        }
    }

    let slide = Slide::from_image(spec.id.clone(), &img, spec.tile_size, spec.label())?;
    let mask = AnnotationMask {
        slide_id: spec.id.clone(),
        mask: tumor,
    };
    Ok(SyntheticSlide {
        slide,
        mask,
        tissue,
    })
}

/// Pixels of the disc if it lies entirely in tissue and touches no existing
/// nodule.
fn disc_if_free(
    tissue: &BinaryMask,
    tumor: &BinaryMask,
    cx: u32,
    cy: u32,
    r: u32,
) -> Option<Vec<(u32, u32)>> {
    let (cx, cy, r) = (i64::from(cx), i64::from(cy), i64::from(r));
    let (w, h) = (i64::from(tissue.width()), i64::from(tissue.height()));
    if cx - r < 0 || cy - r < 0 || cx + r >= w || cy + r >= h {
        return None;
    }
    let mut pixels = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let (x, y) = ((cx + dx) as u32, (cy + dy) as u32);
            if !tissue.get(x, y) || tumor.get(x, y) {
                return None;
            }
            pixels.push((x, y));
        }
    }
    Some(pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(count: u32, seed: u64) -> SyntheticSlideSpec {
        SyntheticSlideSpec {
            id: "s".into(),
            width_px: 256,
            height_px: 192,
            tile_size: 64,
            tissue_fraction: 0.5,
            tumor_nodule_count: count,
            tumor_nodule_radius_px: (8, 14),
            seed,
        }
    }

    #[test]
    fn no_nodules_means_normal_and_empty_mask() {
        let (slide, mask) = generate_synthetic_slide(&small(0, 1)).unwrap();
        assert_eq!(slide.label(), SlideLabel::Normal);
        assert_eq!(mask.tumor_pixels(), 0);
        mask.validate_for(&slide).unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic_slide_with_tissue(&small(2, 9)).unwrap();
        let b = generate_synthetic_slide_with_tissue(&small(2, 9)).unwrap();
        assert_eq!(a.slide, b.slide);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.tissue, b.tissue);
        let c = generate_synthetic_slide_with_tissue(&small(2, 10)).unwrap();
        assert_ne!(a.slide, c.slide);
    }

    #[test]
    fn nodules_lie_inside_tissue() {
        for seed in 0..5 {
            let s = generate_synthetic_slide_with_tissue(&small(3, seed)).unwrap();
            assert!(s.mask.mask.is_subset_of(&s.tissue));
            s.mask.validate_for(&s.slide).unwrap();
        }
    }

    #[test]
    fn impossible_placement_errors() {
        let mut spec = small(1, 0);
        spec.tissue_fraction = 0.01;
        spec.tumor_nodule_radius_px = (60, 80);
        assert!(generate_synthetic_slide(&spec).is_err());
    }

    #[test]
    fn stain_colors_are_where_expected() {
        let s = generate_synthetic_slide_with_tissue(&small(2, 3)).unwrap();
        let img = s.slide.to_image();
        for (x, y, px) in img.enumerate_pixels() {
            let [r, g, b] = px.0.map(i32::from);
            if s.mask.mask.get(x, y) {
                assert!(b > g && r > g, "tumor pixel {px:?} not purple");
            } else if s.tissue.get(x, y) {
                assert!(r >= b && b > g, "tissue pixel {px:?} not pink");
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small(1, 0);
        spec.tissue_fraction = 0.0;
        assert!(spec.validate().is_err());
        spec.tissue_fraction = 0.5;
        spec.tumor_nodule_radius_px = (5, 4);
        assert!(spec.validate().is_err());
    }
}
