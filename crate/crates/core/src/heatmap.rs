//! Whole-slide tumor-probability heatmaps.
//!
//! One cell per patch position on a regular grid; cell `(row, col)` covers
//! the patch whose origin is `(col · stride, row · stride)`.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};
use crate::mask::{BinaryMask, MaskIntegral};
use crate::nn::ModelGraph;
use crate::patcher::central_window;
use crate::slide_store::{AnnotationMask, Slide};
use crate::train::predict_scores;

pub const DEFAULT_THRESHOLD: f64 = 0.9;
/// Cells with less tissue than this are not classified.
pub const MIN_CELL_TISSUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapConfig {
    pub stride_px: u32,
    pub threshold: f64,
    pub skip_non_tissue: bool,
}

impl HeatmapConfig {
    /// Non-overlapping cells, threshold 0.9, background skipped.
    pub fn for_patch(patch_size: u32) -> Self {
        HeatmapConfig {
            stride_px: patch_size,
            threshold: DEFAULT_THRESHOLD,
            skip_non_tissue: true,
        }
    }

    pub fn validate(&self, patch_size: u32) -> Result<()> {
        if self.stride_px == 0 || self.stride_px > patch_size.saturating_mul(4) {
            return Err(invariant!("stride {} outside [1, {}]", self.stride_px, patch_size.saturating_mul(4)));
        }
        check_threshold(self.threshold)
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(invariant!("threshold {t} outside (0, 1)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub slide_id: String,
    pub grid_w: u32,
    pub grid_h: u32,
    pub stride_px: u32,
    pub patch_size_px: u32,
    /// Row-major tumor probabilities.
    pub probs: Vec<f64>,
}

/// Number of patch positions along one axis.
pub fn grid_extent(dim: u32, patch: u32, stride: u32) -> Result<u32> {
    if patch == 0 || stride == 0 {
        return Err(invariant!("patch size and stride must be positive"));
    }
    if patch > dim {
        return Err(invariant!("patch size {patch} exceeds slide dimension {dim}"));
    }
    Ok((dim - patch) / stride + 1)
}

impl Heatmap {
    /// All-zero heatmap with the geometry for a `width`×`height` slide.
    pub fn empty(slide_id: &str, width: u32, height: u32, patch: u32, stride: u32) -> Result<Self> {
        let grid_w = grid_extent(width, patch, stride)?;
        let grid_h = grid_extent(height, patch, stride)?;
        Ok(Heatmap {
            slide_id: slide_id.to_owned(),
            grid_w,
            grid_h,
            stride_px: stride,
            patch_size_px: patch,
            probs: vec![0.0; (grid_w * grid_h) as usize],
        })
    }

    pub fn get(&self, row: u32, col: u32) -> f64 {
        self.probs[(row * self.grid_w + col) as usize]
    }

    /// Slide-pixel origin of a cell's patch.
    pub fn cell_origin(&self, row: u32, col: u32) -> (u32, u32) {
        (col * self.stride_px, row * self.stride_px)
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.grid_h).flat_map(move |r| (0..self.grid_w).map(move |c| (r, c)))
    }
}

/// Classifies every tissue cell of `slide` (already standardized, if the
/// model was trained on standardized patches). Skipped cells score 0.
pub fn predict_heatmap(
    slide: &Slide,
    model: &ModelGraph,
    tissue: &BinaryMask,
    config: &HeatmapConfig,
) -> Result<Heatmap> {
    let input = model.input_shape();
    if input.h != input.w || input.c != 3 {
        return Err(invariant!("model input {input:?} is not a square RGB patch"));
    }
    let patch = input.h as u32;
    config.validate(patch)?;
    if tissue.dimensions() != slide.dimensions() {
        return Err(invariant!("tissue mask {:?} does not match slide {:?}", tissue.dimensions(), slide.dimensions()));
    }
    let mut heatmap = Heatmap::empty(slide.id(), slide.width(), slide.height(), patch, config.stride_px)?;
    let integral = MaskIntegral::new(tissue);
    let min_count = MIN_CELL_TISSUE * f64::from(patch) * f64::from(patch);
    let mut visited = Vec::new();
    let mut images = Vec::new();
    for (i, (row, col)) in heatmap.cells().enumerate() {
        let (x, y) = heatmap.cell_origin(row, col);
        if config.skip_non_tissue && (integral.count(x, y, patch, patch) as f64) < min_count {
            continue;
        }
        visited.push(i);
        images.push(slide.read_region(x, y, patch, patch)?);
    }
    let refs: Vec<&RgbImage> = images.iter().collect();
    let scores = if refs.is_empty() { Vec::new() } else { predict_scores(model, &refs)? };
    for (i, s) in visited.into_iter().zip(scores) {
        heatmap.probs[i] = s;
    }
    Ok(heatmap)
}

/// Grid mask of cells with probability at or above `threshold`.
pub fn threshold_heatmap(h: &Heatmap, threshold: f64) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    Ok(BinaryMask::from_fn(h.grid_w, h.grid_h, |c, r| h.get(r, c) >= threshold))
}

/// Ground truth at grid resolution: a cell is tumor when its patch's central
/// window holds at least one tumor pixel, the rule used to label patches.
pub fn ground_truth_grid(h: &Heatmap, mask: &AnnotationMask) -> Result<BinaryMask> {
    let need_w = (h.grid_w - 1) * h.stride_px + h.patch_size_px;
    let need_h = (h.grid_h - 1) * h.stride_px + h.patch_size_px;
    let (w, hh) = mask.mask.dimensions();
    if w < need_w || hh < need_h {
        return Err(invariant!("mask {w}x{hh} is smaller than the heatmap footprint {need_w}x{need_h}"));
    }
    let integral = MaskIntegral::new(&mask.mask);
    Ok(BinaryMask::from_fn(h.grid_w, h.grid_h, |c, r| {
        let (x, y) = h.cell_origin(r, c);
        let (cx, cy, side) = central_window(x, y, h.patch_size_px);
        integral.count(cx, cy, side, side) > 0
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub threshold: f64,
    pub dice: f64,
    pub iou: f64,
    /// `None` when the truth has no tumor cells.
    pub cell_sensitivity: Option<f64>,
    /// `None` when every cell is tumor.
    pub cell_specificity: Option<f64>,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

/// Overlap of two equally sized grids. Two empty grids agree perfectly.
pub fn compare_grids(pred: &BinaryMask, truth: &BinaryMask, threshold: f64) -> Result<GridComparison> {
    if pred.dimensions() != truth.dimensions() {
        return Err(invariant!("grids differ: {:?} vs {:?}", pred.dimensions(), truth.dimensions()));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
    Ok(GridComparison {
        threshold,
        dice: ratio(2 * tp, 2 * tp + fp + fneg).unwrap_or(1.0),
        iou: ratio(tp, tp + fp + fneg).unwrap_or(1.0),
        cell_sensitivity: ratio(tp, tp + fneg),
        cell_specificity: ratio(tn, tn + fp),
        true_positive: tp,
        false_positive: fp,
        false_negative: fneg,
        true_negative: tn,
    })
}

pub fn compare_to_ground_truth(h: &Heatmap, mask: &AnnotationMask, threshold: f64) -> Result<GridComparison> {
    if mask.slide_id != h.slide_id {
        return Err(invariant!("mask for {} compared to heatmap of {}", mask.slide_id, h.slide_id));
    }
    compare_grids(&threshold_heatmap(h, threshold)?, &ground_truth_grid(h, mask)?, threshold)
}

/// Geometry and values written next to a heatmap PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub slide_id: String,
    pub grid_w: u32,
    pub grid_h: u32,
    pub stride_px: u32,
    pub patch_size_px: u32,
    pub threshold: f64,
    pub probs: Vec<f64>,
}

impl HeatmapSidecar {
    pub fn heatmap(&self) -> Result<Heatmap> {
        if self.probs.len() != (self.grid_w * self.grid_h) as usize {
            return Err(invariant!("sidecar holds {} values for a {}x{} grid", self.probs.len(), self.grid_w, self.grid_h));
        }
        Ok(Heatmap {
            slide_id: self.slide_id.clone(),
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            stride_px: self.stride_px,
            patch_size_px: self.patch_size_px,
            probs: self.probs.clone(),
        })
    }
}

pub fn heatmap_image(h: &Heatmap) -> GrayImage {
    GrayImage::from_fn(h.grid_w, h.grid_h, |c, r| Luma([(h.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8]))
}

/// Writes the grayscale heatmap (one pixel per cell) and a JSON sidecar
/// with the same stem.
pub fn render_heatmap(h: &Heatmap, threshold: f64, png_path: &Path) -> Result<()> {
    if let Some(parent) = png_path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    heatmap_image(h).save(png_path).map_err(|e| Error::image(png_path, e))?;
    let sidecar = HeatmapSidecar {
        slide_id: h.slide_id.clone(),
        grid_w: h.grid_w,
        grid_h: h.grid_h,
        stride_px: h.stride_px,
        patch_size_px: h.patch_size_px,
        threshold,
        probs: h.probs.clone(),
    };
    let json_path = png_path.with_extension("json");
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
}

pub fn read_heatmap_sidecar(path: &Path) -> Result<HeatmapSidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Slide-sized overlay: flagged cells tinted red, ground-truth outline in
/// green.
pub fn overlay_image(slide: &Slide, h: &Heatmap, mask: Option<&AnnotationMask>, threshold: f64) -> Result<RgbImage> {
    let flags = threshold_heatmap(h, threshold)?;
    let mut img = slide.to_image();
    for (row, col) in h.cells() {
        if !flags.get(col, row) {
            continue;
        }
        let (x0, y0) = h.cell_origin(row, col);
        let side = h.stride_px.min(h.patch_size_px);
        for y in y0..(y0 + side).min(img.height()) {
            for x in x0..(x0 + side).min(img.width()) {
                let p = img.get_pixel_mut(x, y);
                p.0 = [
                    ((u16::from(p.0[0]) * 3 + 2 * 255) / 5) as u8,
                    (u16::from(p.0[1]) * 3 / 5) as u8,
                    (u16::from(p.0[2]) * 3 / 5) as u8,
                ];
            }
        }
    }
    if let Some(m) = mask {
        if m.mask.dimensions() != slide.dimensions() {
            return Err(invariant!("mask does not match slide {}", slide.id()));
        }
        let (w, hgt) = slide.dimensions();
        for y in 0..hgt {
            for x in 0..w {
                if !m.mask.get(x, y) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || x + 1 == w
                    || y + 1 == hgt
                    || !m.mask.get(x - 1, y)
                    || !m.mask.get(x + 1, y)
                    || !m.mask.get(x, y - 1)
                    || !m.mask.get(x, y + 1);
                if edge {
                    img.put_pixel(x, y, Rgb([0, 200, 0]));
                }
            }
        }
    }
    Ok(img)
}

pub fn render_overlay(
    slide: &Slide,
    h: &Heatmap,
    mask: Option<&AnnotationMask>,
    threshold: f64,
    path: &Path,
) -> Result<()> {
    overlay_image(slide, h, mask, threshold)?
        .save(path)
        .map_err(|e| Error::image(path, e))
}
