//! Tiled slides, annotation masks and dataset manifests.
//!
//! A slide on disk is a directory:
//!
//! ```text
//! slide_dir/
//!   meta.json        {"id", "width_px", "height_px", "tile_size", "label"}
//!   tile_0_0.png     RGB8, row 0, column 0
//!   tile_0_1.png
//!   ...
//! ```
//!
//! Interior tiles are exactly `tile_size` square; the last row and column
//! may be narrower. A plain image file can also be opened as a single-tile
//! slide.

mod manifest;
mod synth;

use std::fs;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};
use crate::mask::BinaryMask;

pub use manifest::{read_manifest, write_manifest, DatasetManifest, ManifestEntry};
pub use synth::{
    generate_synthetic_slide, generate_synthetic_slide_with_tissue, SyntheticSlide,
    SyntheticSlideSpec,
};

const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlideLabel {
    Tumor,
    Normal,
}

impl std::fmt::Display for SlideLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SlideLabel::Tumor => "tumor",
            SlideLabel::Normal => "normal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideMeta {
    pub id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub tile_size: u32,
    pub label: SlideLabel,
}

/// An immutable RGB8 slide split into a row-major grid of tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Slide {
    meta: SlideMeta,
    cols: u32,
    rows: u32,
    tiles: Vec<RgbImage>,
}

impl Slide {
    /// Splits a flat image into tiles of `tile_size`.
    pub fn from_image(
        id: impl Into<String>,
        image: &RgbImage,
        tile_size: u32,
        label: SlideLabel,
    ) -> Result<Self> {
        let (width, height) = image.dimensions();
        if width == 0 || height == 0 {
            return Err(invariant!("slide image is empty"));
        }
        if tile_size == 0 {
            return Err(invariant!("tile size must be positive"));
        }
        let cols = width.div_ceil(tile_size);
        let rows = height.div_ceil(tile_size);
        let mut tiles = Vec::with_capacity((cols * rows) as usize);
        for r in 0..rows {
            for c in 0..cols {
                let x = c * tile_size;
                let y = r * tile_size;
                let w = tile_size.min(width - x);
                let h = tile_size.min(height - y);
                tiles.push(image::imageops::crop_imm(image, x, y, w, h).to_image());
            }
        }
        Ok(Slide {
            meta: SlideMeta {
                id: id.into(),
                width_px: width,
                height_px: height,
                tile_size,
                label,
            },
            cols,
            rows,
            tiles,
        })
    }

    /// Assembles a slide from metadata and tiles, checking the tile grid.
    pub fn from_tiles(meta: SlideMeta, tiles: Vec<RgbImage>) -> Result<Self> {
        if meta.width_px == 0 || meta.height_px == 0 || meta.tile_size == 0 {
            return Err(invariant!("slide {}: dimensions must be positive", meta.id));
        }
        let cols = meta.width_px.div_ceil(meta.tile_size);
        let rows = meta.height_px.div_ceil(meta.tile_size);
        if tiles.len() != (cols * rows) as usize {
            return Err(invariant!(
                "slide {}: expected {} tiles, found {}",
                meta.id,
                cols * rows,
                tiles.len()
            ));
        }
        for (i, tile) in tiles.iter().enumerate() {
            let (r, c) = (i as u32 / cols, i as u32 % cols);
            let expected = (
                meta.tile_size.min(meta.width_px - c * meta.tile_size),
                meta.tile_size.min(meta.height_px - r * meta.tile_size),
            );
            if tile.dimensions() != expected {
                return Err(invariant!(
                    "slide {}: tile ({r},{c}) is {:?}, expected {:?}",
                    meta.id,
                    tile.dimensions(),
                    expected
                ));
            }
        }
        Ok(Slide {
            meta,
            cols,
            rows,
            tiles,
        })
    }

    pub fn meta(&self) -> &SlideMeta {
        &self.meta
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn label(&self) -> SlideLabel {
        self.meta.label
    }

    pub fn width(&self) -> u32 {
        self.meta.width_px
    }

    pub fn height(&self) -> u32 {
        self.meta.height_px
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.meta.width_px, self.meta.height_px)
    }

    pub fn tile_size(&self) -> u32 {
        self.meta.tile_size
    }

    /// `(columns, rows)` of the tile grid.
    pub fn grid(&self) -> (u32, u32) {
        (self.cols, self.rows)
    }

    pub fn tile(&self, row: u32, col: u32) -> &RgbImage {
        &self.tiles[(row * self.cols + col) as usize]
    }

    /// Copies the `w × h` region at `(x, y)`, stitching across tile
    /// boundaries.
    pub fn read_region(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage> {
        let in_bounds = x
            .checked_add(w)
            .zip(y.checked_add(h))
            .is_some_and(|(x1, y1)| x1 <= self.width() && y1 <= self.height());
        if !in_bounds {
            return Err(invariant!(
                "region ({x},{y}) {w}x{h} outside slide {} of {}x{}",
                self.id(),
                self.width(),
                self.height()
            ));
        }
        let ts = self.meta.tile_size;
        let mut out = RgbImage::new(w, h);
        if w == 0 || h == 0 {
            return Ok(out);
        }
        let out_stride = w as usize * 3;
        for row in y / ts..=(y + h - 1) / ts {
            for col in x / ts..=(x + w - 1) / ts {
                let tile = self.tile(row, col);
                let (tx0, ty0) = (col * ts, row * ts);
                // overlap of the region with this tile, in slide coordinates
                let sx0 = x.max(tx0);
                let sy0 = y.max(ty0);
                let sx1 = (x + w).min(tx0 + tile.width());
                let sy1 = (y + h).min(ty0 + tile.height());
                let span = (sx1 - sx0) as usize * 3;
                let tile_stride = tile.width() as usize * 3;
                let raw = tile.as_raw();
                for sy in sy0..sy1 {
                    let src = (sy - ty0) as usize * tile_stride + (sx0 - tx0) as usize * 3;
                    let dst = (sy - y) as usize * out_stride + (sx0 - x) as usize * 3;
                    out.as_mut()[dst..dst + span].copy_from_slice(&raw[src..src + span]);
                }
            }
        }
        Ok(out)
    }

    /// The whole slide as one image.
    pub fn to_image(&self) -> RgbImage {
        self.read_region(0, 0, self.width(), self.height())
            .expect("full region is in bounds")
    }
}

/// Ground-truth tumor annotation aligned pixel-for-pixel with a slide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMask {
    pub slide_id: String,
    pub mask: BinaryMask,
}

impl AnnotationMask {
    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }

    pub fn tumor_pixels(&self) -> usize {
        self.mask.count()
    }

    /// Checks dimensions and label consistency against the parent slide.
    pub fn validate_for(&self, slide: &Slide) -> Result<()> {
        if self.mask.dimensions() != slide.dimensions() {
            return Err(invariant!(
                "mask for {} is {:?}, slide is {:?}",
                slide.id(),
                self.mask.dimensions(),
                slide.dimensions()
            ));
        }
        match (slide.label(), self.tumor_pixels()) {
            (SlideLabel::Tumor, 0) => Err(invariant!(
                "tumor slide {} has an empty annotation mask",
                slide.id()
            )),
            (SlideLabel::Normal, n) if n > 0 => Err(invariant!(
                "normal slide {} has {n} annotated tumor pixels",
                slide.id()
            )),
            _ => Ok(()),
        }
    }
}

pub fn read_slide(path: &Path) -> Result<Slide> {
    if path.is_dir() {
        let meta_path = path.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SlideMeta =
            serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;
        if meta.tile_size == 0 || meta.width_px == 0 || meta.height_px == 0 {
            return Err(invariant!("{}: dimensions must be positive", meta_path.display()));
        }
        let cols = meta.width_px.div_ceil(meta.tile_size);
        let rows = meta.height_px.div_ceil(meta.tile_size);
        let mut tiles = Vec::with_capacity((cols * rows) as usize);
        for r in 0..rows {
            for c in 0..cols {
                tiles.push(read_rgb(&path.join(format!("tile_{r}_{c}.png")))?);
            }
        }
        Slide::from_tiles(meta, tiles)
    } else {
        let img = read_rgb(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let tile = img.width().max(img.height());
        Slide::from_image(id, &img, tile, SlideLabel::Normal)
    }
}

pub fn write_slide(slide: &Slide, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta_path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(slide.meta()).expect("meta serializes");
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    let (cols, rows) = slide.grid();
    for r in 0..rows {
        for c in 0..cols {
            let p = dir.join(format!("tile_{r}_{c}.png"));
            slide.tile(r, c).save(&p).map_err(|e| Error::image(&p, e))?;
        }
    }
    Ok(())
}

fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    match img {
        image::DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(invariant!(
            "{}: expected 8-bit RGB, found {:?}",
            path.display(),
            other.color()
        )),
    }
}

/// Reads a grayscale mask PNG; values ≥ 128 are tumor.
pub fn read_mask(path: &Path, slide_id: &str) -> Result<AnnotationMask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(invariant!(
                "{}: expected 8-bit grayscale mask, found {:?}",
                path.display(),
                other.color()
            ))
        }
    };
    Ok(AnnotationMask {
        slide_id: slide_id.to_owned(),
        mask: BinaryMask::from_gray_image(&gray),
    })
}

pub fn write_mask(mask: &AnnotationMask, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    mask.mask
        .to_gray_image()
        .save(path)
        .map_err(|e| Error::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x * 7 + y * 13) % 256) as u8])
        })
    }

    #[test]
    fn tile_grid_uses_ceil_division() {
        let slide = Slide::from_image("a", &gradient_image(1024, 1024), 256, SlideLabel::Normal)
            .unwrap();
        assert_eq!(slide.grid(), (4, 4));

        let slide = Slide::from_image("b", &gradient_image(1000, 1000), 256, SlideLabel::Normal)
            .unwrap();
        assert_eq!(slide.grid(), (4, 4));
        assert_eq!(slide.tile(3, 3).dimensions(), (232, 232));
        assert_eq!(slide.tile(0, 3).dimensions(), (232, 256));
        assert_eq!(slide.tile(3, 0).dimensions(), (256, 232));
    }

    #[test]
    fn aligned_region_is_the_tile() {
        let slide = Slide::from_image("a", &gradient_image(512, 300), 128, SlideLabel::Normal)
            .unwrap();
        let region = slide.read_region(256, 128, 128, 128).unwrap();
        assert_eq!(&region, slide.tile(1, 2));
    }

    #[test]
    fn full_region_is_whole_image() {
        let img = gradient_image(300, 170);
        let slide = Slide::from_image("a", &img, 64, SlideLabel::Normal).unwrap();
        assert_eq!(slide.to_image(), img);
    }

    #[test]
    fn out_of_bounds_region_is_rejected() {
        let slide = Slide::from_image("a", &gradient_image(100, 100), 64, SlideLabel::Normal)
            .unwrap();
        assert!(slide.read_region(50, 50, 51, 10).is_err());
        assert!(slide.read_region(u32::MAX, 0, 2, 2).is_err());
    }

    #[test]
    fn from_tiles_rejects_bad_edge_tile() {
        let slide = Slide::from_image("a", &gradient_image(100, 100), 64, SlideLabel::Normal)
            .unwrap();
        let mut tiles: Vec<RgbImage> = slide.tiles.clone();
        tiles[1] = RgbImage::new(64, 64);
        assert!(Slide::from_tiles(slide.meta().clone(), tiles).is_err());
    }

    #[test]
    fn mask_label_consistency() {
        let slide = Slide::from_image("t", &gradient_image(8, 8), 8, SlideLabel::Tumor).unwrap();
        let empty = AnnotationMask {
            slide_id: "t".into(),
            mask: BinaryMask::new(8, 8),
        };
        assert!(empty.validate_for(&slide).is_err());
        let wrong_size = AnnotationMask {
            slide_id: "t".into(),
            mask: BinaryMask::from_fn(8, 9, |_, _| true),
        };
        assert!(wrong_size.validate_for(&slide).is_err());
    }

    #[test]
    fn missing_meta_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_slide(dir.path()).unwrap_err();
        assert_eq!(err.category(), crate::error::ErrorCategory::Io);
    }

    #[test]
    fn gray_image_is_not_a_slide() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::new(4, 4).save(&p).unwrap();
        assert!(matches!(read_slide(&p), Err(Error::Invariant(_))));
    }

    #[test]
    fn flat_image_is_a_single_tile_slide() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("flat.png");
        let img = gradient_image(40, 30);
        img.save(&p).unwrap();
        let slide = read_slide(&p).unwrap();
        assert_eq!(slide.grid(), (1, 1));
        assert_eq!(slide.id(), "flat");
        assert_eq!(slide.to_image(), img);
    }
}
