use image::{Rgb, RgbImage};

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    width: u32,
    height: u32,
    pixels: Vec<Hsv>,
}

impl HsvImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Hsv] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Hsv {
        self.pixels[(y * self.width + x) as usize]
    }
}

/// Hexcone conversion. Gray pixels (s = 0) get hue 0.
pub fn rgb_pixel_to_hsv(px: Rgb<u8>) -> Hsv {
    let [r, g, b] = px.0.map(|c| f64::from(c) / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    if delta == 0.0 {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let s = delta / max;
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h >= 360.0 {
        h -= 360.0;
    }
    Hsv { h, s, v }
}

/// Inverse of [`rgb_pixel_to_hsv`]; channels are clamped into range first
/// and the result is rounded to the nearest 8-bit value.
pub fn hsv_to_rgb_pixel(hsv: Hsv) -> Rgb<u8> {
    let h = hsv.h.rem_euclid(360.0);
    let s = hsv.s.clamp(0.0, 1.0);
    let v = hsv.v.clamp(0.0, 1.0);
    let c = v * s;
    let sector = h / 60.0;
    let x = c * (1.0 - (sector.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([q(r), q(g), q(b)])
}

pub fn rgb_to_hsv(image: &RgbImage) -> HsvImage {
    HsvImage {
        width: image.width(),
        height: image.height(),
        pixels: image.pixels().map(|&p| rgb_pixel_to_hsv(p)).collect(),
    }
}

pub fn hsv_to_rgb(image: &HsvImage) -> RgbImage {
    let mut out = RgbImage::new(image.width, image.height);
    for (dst, &src) in out.pixels_mut().zip(&image.pixels) {
        *dst = hsv_to_rgb_pixel(src);
    }
    out
}
