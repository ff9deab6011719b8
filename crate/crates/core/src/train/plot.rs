use std::path::Path;

use image::{Rgb, RgbImage};

use super::RocCurve;
use crate::error::{Error, Result};

const MARGIN: u32 = 24;

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Plots the curve with the chance diagonal on a `size`×`size` canvas.
pub fn render_roc_png(curve: &RocCurve, size: u32, path: &Path) -> Result<()> {
    let size = size.max(4 * MARGIN);
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    let span = f64::from(size - 2 * MARGIN);
    let to_px = |fpr: f64, tpr: f64| {
        (
            (f64::from(MARGIN) + fpr * span).round() as i64,
            (f64::from(size - MARGIN) - tpr * span).round() as i64,
        )
    };
    let axis = Rgb([0, 0, 0]);
    line(&mut img, to_px(0.0, 0.0), to_px(1.0, 0.0), axis);
    line(&mut img, to_px(0.0, 0.0), to_px(0.0, 1.0), axis);
    line(&mut img, to_px(0.0, 0.0), to_px(1.0, 1.0), Rgb([170, 170, 170]));
    for w in curve.points.windows(2) {
        line(&mut img, to_px(w[0].fpr, w[0].tpr), to_px(w[1].fpr, w[1].tpr), Rgb([200, 30, 30]));
    }
    img.save(path).map_err(|e| Error::image(path, e))
}
