//! Training-time geometric augmentation: flips, rotation about the patch
//! center and central zoom.
//!
//! A random draw is applied as one inverse mapping (flips, then rotation,
//! then zoom) followed by a single bilinear resample, so composite transforms
//! blur no more than a lone rotation. Samples falling outside the patch take
//! the nearest edge pixel.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    /// Zoom factors are drawn from `[1 - f, 1 + f]`.
    pub max_zoom_fraction: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 20.0,
            max_zoom_fraction: 0.2,
            horizontal_flip: true,
            vertical_flip: true,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg.is_finite()) {
            return Err(invariant!("rotation bound must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.max_zoom_fraction) {
            return Err(invariant!("zoom fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Independent, reproducible stream for one data-loading worker.
    pub fn stream(&self, worker: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(worker);
        rng
    }
}

/// One concrete set of transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub rotation_deg: f64,
    pub zoom: f64,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        rotation_deg: 0.0,
        zoom: 1.0,
        flip_h: false,
        flip_v: false,
    };

    pub fn sample(config: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let r = config.max_rotation_deg;
        let z = config.max_zoom_fraction;
        AugmentDraw {
            rotation_deg: if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 },
            zoom: if z > 0.0 {
                rng.random_range(1.0 - z..=1.0 + z)
            } else {
                1.0
            },
            flip_h: config.horizontal_flip && rng.random_bool(0.5),
            flip_v: config.vertical_flip && rng.random_bool(0.5),
        }
    }

    /// Renders the draw with one bilinear resample.
    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        let (w, h) = img.dimensions();
        let cx = (f64::from(w) - 1.0) / 2.0;
        let cy = (f64::from(h) - 1.0) / 2.0;
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let inv_zoom = 1.0 / self.zoom;
        RgbImage::from_fn(w, h, |x, y| {
            // undo zoom
            let qx = (f64::from(x) - cx) * inv_zoom;
            let qy = (f64::from(y) - cy) * inv_zoom;
            // undo rotation
            let mut sx = cx + cos * qx - sin * qy;
            let mut sy = cy + sin * qx + cos * qy;
            // undo flips
            if self.flip_h {
                sx = f64::from(w) - 1.0 - sx;
            }
            if self.flip_v {
                sy = f64::from(h) - 1.0 - sy;
            }
            bilinear(img, sx, sy)
        })
    }
}

/// Bilinear sample with nearest-edge extension.
fn bilinear(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    let x = x.clamp(0.0, f64::from(w) - 1.0);
    let y = y.clamp(0.0, f64::from(h) - 1.0);
    // snap coordinates within rounding noise of a pixel center
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < 1e-9 {
            r
        } else {
            v
        }
    };
    let (x, y) = (snap(x), snap(y));
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - f64::from(x0);
    let fy = y - f64::from(y0);
    let p00 = img.get_pixel(x0, y0).0;
    let p10 = img.get_pixel(x1, y0).0;
    let p01 = img.get_pixel(x0, y1).0;
    let p11 = img.get_pixel(x1, y1).0;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
        let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// Mirror left-right.
pub fn flip_h(img: &RgbImage) -> RgbImage {
    image::imageops::flip_horizontal(img)
}

/// Mirror top-bottom.
pub fn flip_v(img: &RgbImage) -> RgbImage {
    image::imageops::flip_vertical(img)
}

/// Counter-clockwise rotation (as displayed) about the image center.
pub fn rotate(img: &RgbImage, degrees: f64) -> RgbImage {
    AugmentDraw {
        rotation_deg: degrees,
        ..AugmentDraw::IDENTITY
    }
    .apply(img)
}

/// Central zoom; `factor > 1` magnifies.
pub fn zoom(img: &RgbImage, factor: f64) -> Result<RgbImage> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(invariant!("zoom factor must be positive, got {factor}"));
    }
    Ok(AugmentDraw {
        zoom: factor,
        ..AugmentDraw::IDENTITY
    }
    .apply(img))
}

/// Draws a random transform and applies it to a square patch.
pub fn augment(img: &RgbImage, config: &AugmentConfig, rng: &mut impl Rng) -> Result<RgbImage> {
    if img.width() != img.height() {
        return Err(invariant!(
            "augmentation expects a square patch, got {}x{}",
            img.width(),
            img.height()
        ));
    }
    Ok(AugmentDraw::sample(config, rng).apply(img))
}
