//! Image preprocessing: HSV conversion, Otsu segmentation, binary morphology,
//! tissue detection and color standardization.

mod color;
mod hsv;
mod morphology;
mod otsu;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::BinaryMask;
use crate::slide_store::Slide;

pub use color::{
    compute_color_stats, hsv_color_stats, hue_delta, pooled_color_stats, standardize_color, ColorTemplate,
    STD_FLOOR,
};
pub use hsv::{hsv_to_rgb, hsv_to_rgb_pixel, rgb_pixel_to_hsv, rgb_to_hsv, Hsv, HsvImage};
pub use morphology::{dilate, erode, morph_close, morph_open};
pub use otsu::otsu_threshold;

/// Tissue detection parameters. Tissue is saturated above the Otsu cut and
/// has a value inside `[v_min, v_max]`, which excludes pen marks and glare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub se_radius: u32,
}

impl Default for TissueConfig {
    fn default() -> Self {
        TissueConfig {
            v_min: 0.1,
            v_max: 0.98,
            se_radius: 1,
        }
    }
}

fn quantized_saturation(s: f64) -> u8 {
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn saturation_histogram(hsv: &HsvImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for px in hsv.pixels() {
        hist[quantized_saturation(px.s) as usize] += 1;
    }
    hist
}

/// Tissue mask of an image: Otsu on saturation, value guard, then opening
/// and closing to remove speckle and fill pinholes.
pub fn tissue_mask_image(image: &RgbImage, config: &TissueConfig) -> Result<BinaryMask> {
    let hsv = rgb_to_hsv(image);
    let t = otsu_threshold(&saturation_histogram(&hsv))?;
    let raw: Vec<u8> = hsv
        .pixels()
        .iter()
        .map(|px| {
            u8::from(quantized_saturation(px.s) > t && px.v >= config.v_min && px.v <= config.v_max)
        })
        .collect();
    let raw = BinaryMask::from_vec(image.width(), image.height(), raw)?;
    let opened = morph_open(&raw, config.se_radius);
    Ok(morph_close(&opened, config.se_radius))
}

pub fn tissue_mask(slide: &Slide) -> Result<BinaryMask> {
    tissue_mask_image(&slide.to_image(), &TissueConfig::default())
}

/// Standardizes a whole slide's tissue pixels to `template`.
pub fn standardize_slide(
    slide: &Slide,
    tissue: &BinaryMask,
    template: &ColorTemplate,
) -> Result<Slide> {
    let img = standardize_color(&slide.to_image(), tissue, template)?;
    Slide::from_image(slide.id(), &img, slide.tile_size(), slide.label())
}
