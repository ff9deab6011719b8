//! Moment-matching color standardization in HSV space.
//!
//! Saturation and value are shifted and scaled so their tissue mean and
//! standard deviation match a template. Hue is handled circularly: the mean is
//! the direction of the resultant vector, the spread is the circular standard
//! deviation, and pixels are rotated by the mean difference and scaled about
//! the template mean.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::hsv::{hsv_to_rgb_pixel, rgb_pixel_to_hsv, Hsv};
use crate::error::{invariant, Result};
use crate::mask::BinaryMask;

/// Lower bound on standard deviations, in units of each channel's full range
/// (hue range is 360°).
pub const STD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorTemplate {
    pub h_mean: f64,
    pub h_std: f64,
    pub s_mean: f64,
    pub s_std: f64,
    pub v_mean: f64,
    pub v_std: f64,
}

impl ColorTemplate {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.h_mean,
            self.h_std,
            self.s_mean,
            self.s_std,
            self.v_mean,
            self.v_std,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(invariant!("color template has non-finite fields"));
        }
        if self.h_std < STD_FLOOR * 360.0 || self.s_std < STD_FLOOR || self.v_std < STD_FLOOR {
            return Err(invariant!("color template std below floor"));
        }
        Ok(())
    }
}

/// Signed angular difference folded into `[-180, 180)`.
pub fn hue_delta(a: f64, b: f64) -> f64 {
    (a - b + 180.0).rem_euclid(360.0) - 180.0
}

#[derive(Default)]
struct Moments {
    n: f64,
    sin: f64,
    cos: f64,
    s: f64,
    s2: f64,
    v: f64,
    v2: f64,
}

impl Moments {
    fn push(&mut self, px: Hsv) {
        let theta = px.h.to_radians();
        self.n += 1.0;
        self.sin += theta.sin();
        self.cos += theta.cos();
        self.s += px.s;
        self.s2 += px.s * px.s;
        self.v += px.v;
        self.v2 += px.v * px.v;
    }

    fn finish(&self) -> ColorTemplate {
        let n = self.n;
        let mut h_mean = self.sin.atan2(self.cos).to_degrees().rem_euclid(360.0);
        if h_mean >= 360.0 {
            h_mean = 0.0;
        }
        let resultant = ((self.sin / n).powi(2) + (self.cos / n).powi(2)).sqrt().min(1.0);
        let h_std = if resultant > 0.0 {
            (-2.0 * resultant.ln()).sqrt().to_degrees()
        } else {
            180.0
        };
        let std = |sum: f64, sum2: f64| {
            let mean = sum / n;
            ((sum2 / n - mean * mean).max(0.0)).sqrt()
        };
        ColorTemplate {
            h_mean,
            h_std: h_std.max(STD_FLOOR * 360.0),
            s_mean: self.s / n,
            s_std: std(self.s, self.s2).max(STD_FLOOR),
            v_mean: self.v / n,
            v_std: std(self.v, self.v2).max(STD_FLOOR),
        }
    }
}

fn check_mask(image: &RgbImage, mask: &BinaryMask) -> Result<()> {
    if image.dimensions() != mask.dimensions() {
        return Err(invariant!(
            "mask is {:?}, image is {:?}",
            mask.dimensions(),
            image.dimensions()
        ));
    }
    Ok(())
}

/// Per-channel HSV mean and population standard deviation over masked pixels.
pub fn compute_color_stats(image: &RgbImage, mask: &BinaryMask) -> Result<ColorTemplate> {
    check_mask(image, mask)?;
    let mut m = Moments::default();
    for (&px, &on) in image.pixels().zip(mask.as_slice()) {
        if on != 0 {
            m.push(rgb_pixel_to_hsv(px));
        }
    }
    if m.n < 2.0 {
        return Err(invariant!(
            "color statistics need at least 2 masked pixels, found {}",
            m.n
        ));
    }
    Ok(m.finish())
}

/// Statistics of HSV pixels given directly.
pub fn hsv_color_stats(pixels: impl IntoIterator<Item = Hsv>) -> Result<ColorTemplate> {
    let mut m = Moments::default();
    for px in pixels {
        m.push(px);
    }
    if m.n < 2.0 {
        return Err(invariant!("color statistics need at least 2 pixels"));
    }
    Ok(m.finish())
}

/// Pools several images' masked pixels into a single template.
pub fn pooled_color_stats<'a>(
    items: impl IntoIterator<Item = (&'a RgbImage, &'a BinaryMask)>,
) -> Result<ColorTemplate> {
    let mut m = Moments::default();
    for (image, mask) in items {
        check_mask(image, mask)?;
        for (&px, &on) in image.pixels().zip(mask.as_slice()) {
            if on != 0 {
                m.push(rgb_pixel_to_hsv(px));
            }
        }
    }
    if m.n < 2.0 {
        return Err(invariant!("color statistics need at least 2 masked pixels"));
    }
    Ok(m.finish())
}

/// Maps masked pixels so their HSV moments match `template`; unmasked
/// pixels are copied unchanged.
pub fn standardize_color(
    image: &RgbImage,
    mask: &BinaryMask,
    template: &ColorTemplate,
) -> Result<RgbImage> {
    template.validate()?;
    let source = compute_color_stats(image, mask)?;
    let h_scale = template.h_std / source.h_std;
    let s_scale = template.s_std / source.s_std;
    let v_scale = template.v_std / source.v_std;
    let mut out = image.clone();
    for (px, &on) in out.pixels_mut().zip(mask.as_slice()) {
        if on == 0 {
            continue;
        }
        let hsv = rgb_pixel_to_hsv(*px);
        let mapped = Hsv {
            h: (template.h_mean + hue_delta(hsv.h, source.h_mean) * h_scale).rem_euclid(360.0),
            s: ((hsv.s - source.s_mean) * s_scale + template.s_mean).clamp(0.0, 1.0),
            v: ((hsv.v - source.v_mean) * v_scale + template.v_mean).clamp(0.0, 1.0),
        };
        *px = hsv_to_rgb_pixel(mapped);
    }
    Ok(out)
}
