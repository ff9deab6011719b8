//! Binary masks and summed-area tables over them.

use crate::error::{invariant, Result};

/// A dense `width × height` mask with one byte per pixel, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
        }
    }

    /// Builds a mask from raw values; any non-zero value becomes 1.
    pub fn from_vec(width: u32, height: u32, mut pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(invariant!(
                "mask buffer holds {} values, expected {}x{}",
                pixels.len(),
                width,
                height
            ));
        }
        for p in &mut pixels {
            *p = u8::from(*p != 0);
        }
        Ok(BinaryMask {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(u8::from(f(x, y)));
            }
        }
        BinaryMask {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[y as usize * self.width as usize + x as usize] != 0
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.pixels[y as usize * self.width as usize + x as usize] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions()
            && self
                .pixels
                .iter()
                .zip(&other.pixels)
                .all(|(&a, &b)| a <= b)
    }

    /// |A ∩ B| / |A ∪ B|; two empty masks have Jaccard index 1.
    pub fn jaccard(&self, other: &BinaryMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.pixels.iter().zip(&other.pixels) {
            inter += usize::from(a & b);
            union += usize::from(a | b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Smallest rectangle `(x0, y0, x1, y1)` (inclusive) containing every
    /// foreground pixel.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bbox: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            let row = &self.pixels[y as usize * self.width as usize..][..self.width as usize];
            let Some(first) = row.iter().position(|&p| p != 0) else {
                continue;
            };
            let last = row.iter().rposition(|&p| p != 0).unwrap_or(first);
            bbox = Some(match bbox {
                None => (first as u32, y, last as u32, y),
                Some((x0, y0, x1, _)) => (x0.min(first as u32), y0, x1.max(last as u32), y),
            });
        }
        bbox
    }

    /// Renders as an 8-bit grayscale image, 0 for background and 255 for
    /// foreground.
    pub fn to_gray_image(&self) -> image::GrayImage {
        let data = self.pixels.iter().map(|&p| p * 255).collect();
        image::GrayImage::from_raw(self.width, self.height, data).expect("buffer sized to mask")
    }

    /// Values ≥ 128 become foreground.
    pub fn from_gray_image(img: &image::GrayImage) -> Self {
        BinaryMask {
            width: img.width(),
            height: img.height(),
            pixels: img.as_raw().iter().map(|&p| u8::from(p >= 128)).collect(),
        }
    }
}

/// Summed-area table for O(1) foreground counts over rectangles.
#[derive(Debug, Clone)]
pub struct MaskIntegral {
    width: u32,
    height: u32,
    // (width + 1) × (height + 1), first row and column zero
    sums: Vec<u64>,
}

impl MaskIntegral {
    pub fn new(mask: &BinaryMask) -> Self {
        let w = mask.width as usize;
        let h = mask.height as usize;
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += u64::from(mask.pixels[y * w + x]);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        MaskIntegral {
            width: mask.width,
            height: mask.height,
            sums,
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Foreground count inside `[x, x + w) × [y, y + h)`. The rectangle
    /// must lie within the mask.
    pub fn count(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let stride = self.width as usize + 1;
        let (x0, y0) = (x as usize, y as usize);
        let (x1, y1) = (x0 + w as usize, y0 + h as usize);
        self.sums[y1 * stride + x1] + self.sums[y0 * stride + x0]
            - self.sums[y0 * stride + x1]
            - self.sums[y1 * stride + x0]
    }
}
