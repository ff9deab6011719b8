//! Single-sample forward and backward kernels, channels-last.
//!
//! Backward kernels take the forward input rather than the output and
//! accumulate parameter gradients into the caller's buffer.

use super::Scalar;

/// Height, width and channels of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Shape { h, w, c }
    }

    pub const fn flat(c: usize) -> Self {
        Shape { h: 1, w: 1, c }
    }

    pub const fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Output extent and leading padding of a windowed op along one axis.
/// `same` yields `ceil(n / stride)` outputs, padding the extra pixel at the
/// bottom/right.
pub fn window_geometry(n: usize, k: usize, stride: usize, same: bool) -> Option<(usize, usize)> {
    if same {
        let out = n.div_ceil(stride);
        let total = ((out - 1) * stride + k).saturating_sub(n);
        Some((out, total / 2))
    } else if n >= k {
        Some(((n - k) / stride + 1, 0))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub input: Shape,
    pub output: Shape,
    pub k: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Valid `(ky, iy)` pairs for output row `oy`.
    #[inline]
    fn rows(&self, oy: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let base = (oy * self.stride) as isize - self.pad_top as isize;
        (0..self.k).filter_map(move |ky| {
            let iy = base + ky as isize;
            (iy >= 0 && (iy as usize) < self.input.h).then_some((ky, iy as usize))
        })
    }

    #[inline]
    fn cols(&self, ox: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let base = (ox * self.stride) as isize - self.pad_left as isize;
        (0..self.k).filter_map(move |kx| {
            let ix = base + kx as isize;
            (ix >= 0 && (ix as usize) < self.input.w).then_some((kx, ix as usize))
        })
    }
}

/// Full cross-correlation. Weights `[k, k, cin, cout]`, bias `[cout]`.
pub fn conv_forward<T: Scalar>(g: &ConvGeometry, x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let (cin, cout, k) = (g.input.c, g.output.c, g.k);
    let mut out = vec![T::zero(); g.output.len()];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let o = &mut out[(oy * g.output.w + ox) * cout..][..cout];
            o.copy_from_slice(bias);
            for (ky, iy) in g.rows(oy) {
                for (kx, ix) in g.cols(ox) {
                    let xin = &x[(iy * g.input.w + ix) * cin..][..cin];
                    let wk = &weight[(ky * k + kx) * cin * cout..][..cin * cout];
                    for (ci, &a) in xin.iter().enumerate() {
                        if a == T::zero() {
                            continue;
                        }
                        let row = &wk[ci * cout..][..cout];
                        for (acc, &wv) in o.iter_mut().zip(row) {
                            *acc += a * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns the input gradient; accumulates weight and bias gradients.
pub fn conv_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let (cin, cout, k) = (g.input.c, g.output.c, g.k);
    let mut dx = vec![T::zero(); g.input.len()];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let gy = &dy[(oy * g.output.w + ox) * cout..][..cout];
            for (db, &v) in dbias.iter_mut().zip(gy) {
                *db += v;
            }
            for (ky, iy) in g.rows(oy) {
                for (kx, ix) in g.cols(ox) {
                    let base = (iy * g.input.w + ix) * cin;
                    let xin = &x[base..][..cin];
                    let dxin = &mut dx[base..][..cin];
                    let off = (ky * k + kx) * cin * cout;
                    let wk = &weight[off..][..cin * cout];
                    let dwk = &mut dweight[off..][..cin * cout];
                    for ci in 0..cin {
                        let row = &wk[ci * cout..][..cout];
                        let mut acc = T::zero();
                        for (&wv, &gv) in row.iter().zip(gy) {
                            acc += wv * gv;
                        }
                        dxin[ci] += acc;
                        let a = xin[ci];
                        if a != T::zero() {
                            let drow = &mut dwk[ci * cout..][..cout];
                            for (dw, &gv) in drow.iter_mut().zip(gy) {
                                *dw += a * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Per-channel cross-correlation. Weights `[k, k, c]`, bias `[c]`.
pub fn depthwise_forward<T: Scalar>(g: &ConvGeometry, x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let (c, k) = (g.input.c, g.k);
    let mut out = vec![T::zero(); g.output.len()];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let o = &mut out[(oy * g.output.w + ox) * c..][..c];
            o.copy_from_slice(bias);
            for (ky, iy) in g.rows(oy) {
                for (kx, ix) in g.cols(ox) {
                    let xin = &x[(iy * g.input.w + ix) * c..][..c];
                    let wk = &weight[(ky * k + kx) * c..][..c];
                    for ((acc, &a), &wv) in o.iter_mut().zip(xin).zip(wk) {
                        *acc += a * wv;
                    }
                }
            }
        }
    }
    out
}

pub fn depthwise_backward<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let (c, k) = (g.input.c, g.k);
    let mut dx = vec![T::zero(); g.input.len()];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let gy = &dy[(oy * g.output.w + ox) * c..][..c];
            for (db, &v) in dbias.iter_mut().zip(gy) {
                *db += v;
            }
            for (ky, iy) in g.rows(oy) {
                for (kx, ix) in g.cols(ox) {
                    let base = (iy * g.input.w + ix) * c;
                    let off = (ky * k + kx) * c;
                    let xin = &x[base..][..c];
                    let wk = &weight[off..][..c];
                    let dxin = &mut dx[base..][..c];
                    for ((d, &wv), &gv) in dxin.iter_mut().zip(wk).zip(gy) {
                        *d += wv * gv;
                    }
                    let dwk = &mut dweight[off..][..c];
                    for ((d, &a), &gv) in dwk.iter_mut().zip(xin).zip(gy) {
                        *d += a * gv;
                    }
                }
            }
        }
    }
    dx
}

/// Fully connected layer over the flattened input. Weights `[in, out]`.
pub fn dense_forward<T: Scalar>(x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let out_len = bias.len();
    let mut y = bias.to_vec();
    for (i, &a) in x.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (acc, &wv) in y.iter_mut().zip(&weight[i * out_len..][..out_len]) {
            *acc += a * wv;
        }
    }
    y
}

pub fn dense_backward<T: Scalar>(
    x: &[T],
    weight: &[T],
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let out_len = dy.len();
    for (db, &g) in dbias.iter_mut().zip(dy) {
        *db += g;
    }
    let mut dx = vec![T::zero(); x.len()];
    for (i, &a) in x.iter().enumerate() {
        let row = &weight[i * out_len..][..out_len];
        let mut acc = T::zero();
        for (&wv, &g) in row.iter().zip(dy) {
            acc += wv * g;
        }
        dx[i] = acc;
        if a != T::zero() {
            for (dw, &g) in dweight[i * out_len..][..out_len].iter_mut().zip(dy) {
                *dw += a * g;
            }
        }
    }
    dx
}

pub fn relu_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

/// Gradient passes where the input is strictly positive.
pub fn relu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}

pub fn relu6_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    let six = T::of(6.0);
    x.iter().map(|&v| v.max(T::zero()).min(six)).collect()
}

/// Gradient passes where the input lies strictly inside `(0, 6)`.
pub fn relu6_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    let six = T::of(6.0);
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| if v > T::zero() && v < six { g } else { T::zero() })
        .collect()
}

/// Max pooling without padding.
pub fn maxpool_forward<T: Scalar>(g: &ConvGeometry, x: &[T]) -> Vec<T> {
    let c = g.input.c;
    let mut out = vec![T::neg_infinity(); g.output.len()];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let o = &mut out[(oy * g.output.w + ox) * c..][..c];
            for (_, iy) in g.rows(oy) {
                for (_, ix) in g.cols(ox) {
                    let xin = &x[(iy * g.input.w + ix) * c..][..c];
                    for (m, &v) in o.iter_mut().zip(xin) {
                        if v > *m {
                            *m = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Routes each output gradient to the first maximal input of its window.
pub fn maxpool_backward<T: Scalar>(g: &ConvGeometry, x: &[T], dy: &[T]) -> Vec<T> {
    let c = g.input.c;
    let mut dx = vec![T::zero(); g.input.len()];
    let mut best = vec![(T::neg_infinity(), 0usize); c];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            best.fill((T::neg_infinity(), 0));
            for (_, iy) in g.rows(oy) {
                for (_, ix) in g.cols(ox) {
                    let base = (iy * g.input.w + ix) * c;
                    for (ch, b) in best.iter_mut().enumerate() {
                        let v = x[base + ch];
                        if v > b.0 {
                            *b = (v, base + ch);
                        }
                    }
                }
            }
            let gy = &dy[(oy * g.output.w + ox) * c..][..c];
            for (&(_, idx), &gv) in best.iter().zip(gy) {
                dx[idx] += gv;
            }
        }
    }
    dx
}

pub fn gap_forward<T: Scalar>(input: Shape, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); input.c];
    for px in x.chunks_exact(input.c) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    let inv = T::one() / T::of((input.h * input.w) as f64);
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

pub fn gap_backward<T: Scalar>(input: Shape, dy: &[T]) -> Vec<T> {
    let inv = T::one() / T::of((input.h * input.w) as f64);
    let scaled: Vec<T> = dy.iter().map(|&g| g * inv).collect();
    let mut dx = Vec::with_capacity(input.len());
    for _ in 0..input.h * input.w {
        dx.extend_from_slice(&scaled);
    }
    dx
}

pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    let y = softmax(x);
    let dot = y
        .iter()
        .zip(dy)
        .fold(T::zero(), |acc, (&yv, &g)| acc + yv * g);
    y.iter().zip(dy).map(|(&yv, &g)| yv * (g - dot)).collect()
}
