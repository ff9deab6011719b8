//! Binary morphology with a `(2r+1) × (2r+1)` square structuring element.
//!
//! Pixels outside the image count as background for both operators, so
//! erosion clears every foreground pixel whose neighbourhood leaves the image.

use crate::mask::BinaryMask;

#[derive(Clone, Copy)]
enum Op {
    Erode,
    Dilate,
}

/// One separable pass along rows (`horizontal`) or columns.
fn pass(src: &BinaryMask, radius: u32, op: Op, horizontal: bool) -> BinaryMask {
    let (w, h) = (src.width() as usize, src.height() as usize);
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let at = |line: usize, i: usize| {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    let data = src.as_slice();
    let r = radius as usize;
    let full = 2 * r + 1;
    let mut out = vec![0u8; w * h];
    for line in 0..lines {
        // running count of foreground pixels in [i - r, i + r] ∩ [0, len)
        let mut count: usize = (0..r.min(len)).map(|i| usize::from(data[at(line, i)])).sum();
        for i in 0..len {
            if i + r < len {
                count += usize::from(data[at(line, i + r)]);
            }
            if i > r {
                count -= usize::from(data[at(line, i - r - 1)]);
            }
            let on = match op {
                Op::Dilate => count > 0,
                Op::Erode => count == full,
            };
            out[at(line, i)] = u8::from(on);
        }
    }
    BinaryMask::from_vec(src.width(), src.height(), out).expect("same dimensions")
}

pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    pass(&pass(mask, radius, Op::Erode, true), radius, Op::Erode, false)
}

pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    pass(&pass(mask, radius, Op::Dilate, true), radius, Op::Dilate, false)
}

/// Erosion followed by dilation; removes specks smaller than the element.
pub fn morph_open(mask: &BinaryMask, radius: u32) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

/// Dilation followed by erosion; fills holes smaller than the element.
pub fn morph_close(mask: &BinaryMask, radius: u32) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}
