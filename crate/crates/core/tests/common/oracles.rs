use image::{imageops, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsi_triage::nn::LayerSpec;
use wsi_triage::slide_store::Slide;
use wsi_triage::BinaryMask;

/// Scans every cut with the textbook weighted-variance formula.
pub fn otsu_oracle(hist: &[u64; 256]) -> u8 {
    let n: f64 = hist.iter().map(|&c| c as f64).sum();
    let scores: Vec<f64> = (0..255)
        .map(|t| {
            let (mut w0, mut m0, mut w1, mut m1) = (0.0, 0.0, 0.0, 0.0);
            for (i, &c) in hist.iter().enumerate() {
                let c = c as f64;
                if i <= t {
                    w0 += c;
                    m0 += c * i as f64;
                } else {
                    w1 += c;
                    m1 += c * i as f64;
                }
            }
            if w0 == 0.0 || w1 == 0.0 {
                return f64::NEG_INFINITY;
            }
            let d = m0 / w0 - m1 / w1;
            (w0 / n) * (w1 / n) * d * d
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s >= best * (1.0 - 1e-12)).unwrap() as u8
}

/// Even `k` gives a dense histogram, odd `k` a sparse one with flat optima.
pub fn random_histogram(rng: &mut ChaCha8Rng, k: usize) -> [u64; 256] {
    let mut hist = [0u64; 256];
    let bins = if k % 2 == 0 { 256 } else { rng.random_range(2..6) };
    for _ in 0..bins {
        hist[rng.random_range(0..256)] += rng.random_range(1..1000);
    }
    hist
}

fn square_probe(m: &BinaryMask, r: i64, all: bool) -> BinaryMask {
    let (w, h) = (i64::from(m.width()), i64::from(m.height()));
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        let mut hits = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).map(|(dx, dy)| {
            let (xx, yy) = (i64::from(x) + dx, i64::from(y) + dy);
            xx >= 0 && yy >= 0 && xx < w && yy < h && m.get(xx as u32, yy as u32)
        });
        if all {
            hits.all(|b| b)
        } else {
            hits.any(|b| b)
        }
    })
}

/// Pixels whose whole `(2r+1)²` neighbourhood is set; outside is background.
pub fn erode_oracle(m: &BinaryMask, r: i64) -> BinaryMask {
    square_probe(m, r, true)
}

/// Pixels with any set pixel in their `(2r+1)²` neighbourhood.
pub fn dilate_oracle(m: &BinaryMask, r: i64) -> BinaryMask {
    square_probe(m, r, false)
}

pub fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
    let p = rng.random_range(0.2..0.9);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
}

/// Pairwise Mann-Whitney count: positive above negative scores 1, ties 1/2.
pub fn mann_whitney(scores: &[f64], positives: &[bool]) -> f64 {
    let (mut u, mut pairs) = (0.0, 0.0);
    for (i, &pi) in positives.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positives.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                u += 1.0;
            } else if scores[i] == scores[j] {
                u += 0.5;
            }
        }
    }
    u / pairs
}

pub fn random_dataset(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(4..80);
    let levels = rng.random_range(2..12);
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            // Few distinct levels so ties are common.
            let scores = labels
                .iter()
                .map(|&l| (rng.random_range(0..levels) + usize::from(l)) as f64 / levels as f64)
                .collect();
            return (scores, labels);
        }
    }
}

/// Output size and leading pad of one axis: "same" keeps `ceil(n / s)`
/// outputs and puts the odd padding pixel last.
pub fn axis(n: usize, k: usize, s: usize, same: bool) -> (usize, usize) {
    if same {
        let out = n.div_ceil(s);
        (out, ((out - 1) * s + k).saturating_sub(n) / 2)
    } else {
        ((n - k) / s + 1, 0)
    }
}

/// Direct seven-loop convolution of one NHWC image, HWIO weights.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    (h, w, cin): (usize, usize, usize),
    wt: &[f64],
    b: &[f64],
    k: usize,
    cout: usize,
    stride: usize,
    same: bool,
) -> (usize, usize, Vec<f64>) {
    let (oh, pt) = axis(h, k, stride, same);
    let (ow, pl) = axis(w, k, stride, same);
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = b[co];
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            acc += x[(iy as usize * w + ix as usize) * cin + ci] * wt[((ky * k + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    (oh, ow, out)
}

/// Per-channel convolution, weights `[k, k, c]`.
pub fn naive_depthwise(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    wt: &[f64],
    b: &[f64],
    k: usize,
    stride: usize,
    same: bool,
) -> (usize, usize, Vec<f64>) {
    let (oh, pt) = axis(h, k, stride, same);
    let (ow, pl) = axis(w, k, stride, same);
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut acc = b[ch];
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pt as isize;
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            acc += x[(iy as usize * w + ix as usize) * c + ch] * wt[(ky * k + kx) * c + ch];
                        }
                    }
                }
                out[(oy * ow + ox) * c + ch] = acc;
            }
        }
    }
    (oh, ow, out)
}

/// The slide's tiles pasted into one image, without `Slide::to_image`.
pub fn flatten_tiles(slide: &Slide) -> RgbImage {
    let t = slide.tile_size();
    let mut flat = RgbImage::new(slide.width(), slide.height());
    let (cols, rows) = slide.grid();
    for r in 0..rows {
        for c in 0..cols {
            imageops::replace(&mut flat, slide.tile(r, c), i64::from(c * t), i64::from(r * t));
        }
    }
    flat
}

/// Checks `n` random regions of `slide` against crops of its flattened
/// tiles; returns the number of mismatches.
pub fn read_region_mismatches(slide: &Slide, n: usize, seed: u64) -> usize {
    let flat = flatten_tiles(slide);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..n {
        let w = rng.random_range(1..=300.min(slide.width()));
        let h = rng.random_range(1..=300.min(slide.height()));
        let x = rng.random_range(0..=slide.width() - w);
        let y = rng.random_range(0..=slide.height() - h);
        let got = slide.read_region(x, y, w, h).unwrap();
        if got != imageops::crop_imm(&flat, x, y, w, h).to_image() {
            bad += 1;
        }
    }
    bad
}

/// Parameter count by walking every layer with the textbook formulae.
pub fn enumerate_params(layers: &[LayerSpec]) -> usize {
    let conv = |k: usize, cin: usize, cout: usize| k * k * cin * cout + cout;
    layers
        .iter()
        .map(|l| match *l {
            LayerSpec::Conv2D {
                kernel,
                in_channels,
                out_channels,
                ..
            } => conv(kernel, in_channels, out_channels),
            LayerSpec::PointwiseConv2D {
                in_channels,
                out_channels,
                ..
            } => conv(1, in_channels, out_channels),
            LayerSpec::DepthwiseConv2D { kernel, channels, .. } => kernel * kernel * channels + channels,
            LayerSpec::Dense {
                in_features,
                out_features,
            } => in_features * out_features + out_features,
            LayerSpec::InvertedResidual {
                in_channels,
                out_channels,
                expansion,
                ..
            } => {
                let mid = in_channels * expansion;
                conv(1, in_channels, mid) + 9 * mid + mid + conv(1, mid, out_channels)
            }
            LayerSpec::ResidualBottleneck {
                in_channels,
                mid_channels,
                out_channels,
                stride,
            } => {
                let shortcut = if stride != 1 || in_channels != out_channels {
                    conv(1, in_channels, out_channels)
                } else {
                    0
                };
                conv(1, in_channels, mid_channels)
                    + conv(3, mid_channels, mid_channels)
                    + conv(1, mid_channels, out_channels)
                    + shortcut
            }
            _ => 0,
        })
        .sum()
}
