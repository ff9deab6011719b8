use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsi_triage::nn::{
    layer_backward, layer_forward, layer_param_count, softmax_cross_entropy, LayerSpec, ModelGraph, Padding, Shape,
    Tensor,
};
use wsi_triage::zoo::{build_with, ArchitectureId};

pub const EPS: f64 = 1e-3;
pub const TOL: f64 = 1e-4;

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lim: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-lim..lim)).collect()
}

/// Values bounded away from zero so ReLU kinks sit outside the FD stencil.
pub fn off_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Distinct values spaced well beyond 2·EPS so pooling argmaxes never swap.
pub fn spaced(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    v.shuffle(rng);
    v
}

pub fn batch_shape(n: usize, s: Shape) -> Vec<usize> {
    if s.h == 1 && s.w == 1 {
        vec![n, s.c]
    } else {
        vec![n, s.h, s.w, s.c]
    }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn objective(spec: &LayerSpec, x: &Tensor<f64>, p: &[f64], up: &[f64]) -> f64 {
    let y = layer_forward(spec, x, p).unwrap();
    y.data().iter().zip(up).map(|(a, b)| a * b).sum()
}

/// Central difference, or `None` when the stencil straddles a kink of a
/// piecewise activation (halving the step changes the estimate).
pub fn central_diff(f: impl Fn(f64) -> f64) -> Option<f64> {
    let d = |e: f64| (f(e) - f(-e)) / (2.0 * e);
    let (full, half) = (d(EPS), d(EPS / 2.0));
    let scale = full.abs().max(half.abs()).max(1.0);
    ((full - half).abs() <= 1e-5 * scale).then_some(full)
}

pub struct Check {
    pub input: f64,
    pub params: f64,
    pub skipped: usize,
    pub total: usize,
}

/// Relative errors of the input and parameter gradients against central
/// differences of `sum(upstream · layer(x))`.
pub fn grad_check(spec: &LayerSpec, x: Tensor<f64>, p: Vec<f64>, rng: &mut ChaCha8Rng) -> Check {
    let y = layer_forward(spec, &x, &p).unwrap();
    let up = uniform(rng, y.len(), 1.0);
    let upstream = Tensor::new(y.shape().to_vec(), up.clone()).unwrap();
    let (dx, dp) = layer_backward(spec, &x, &upstream, &p).unwrap();

    let mut skipped = 0;
    let (mut ax, mut nx) = (Vec::new(), Vec::new());
    for i in 0..x.len() {
        let d = central_diff(|e| {
            let mut xe = x.clone();
            xe.data_mut()[i] += e;
            objective(spec, &xe, &p, &up)
        });
        match d {
            Some(d) => {
                ax.push(dx.data()[i]);
                nx.push(d);
            }
            None => skipped += 1,
        }
    }
    let (mut ap, mut np) = (Vec::new(), Vec::new());
    for i in 0..p.len() {
        let d = central_diff(|e| {
            let mut pe = p.clone();
            pe[i] += e;
            objective(spec, &x, &pe, &up)
        });
        match d {
            Some(d) => {
                ap.push(dp[i]);
                np.push(d);
            }
            None => skipped += 1,
        }
    }
    Check {
        input: rel_err(&ax, &nx),
        params: rel_err(&ap, &np),
        skipped,
        total: x.len() + p.len(),
    }
}

pub fn random_case(kind: &str, rng: &mut ChaCha8Rng) -> (LayerSpec, Tensor<f64>, Vec<f64>) {
    let n = rng.random_range(1..=2);
    let h = rng.random_range(3..=6);
    let w = rng.random_range(3..=6);
    let c = rng.random_range(1..=3);
    let stride = rng.random_range(1..=2);
    let padding = if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid };
    let spatial = Shape::new(h, w, c);
    let (spec, input) = match kind {
        "Conv2D" => (
            LayerSpec::Conv2D {
                kernel: *[1, 3].choose(rng).unwrap(),
                stride,
                padding,
                in_channels: c,
                out_channels: rng.random_range(1..=3),
            },
            spatial,
        ),
        "DepthwiseConv2D" => (
            LayerSpec::DepthwiseConv2D {
                kernel: 3,
                stride,
                padding,
                channels: c,
            },
            spatial,
        ),
        "PointwiseConv2D" => (
            LayerSpec::PointwiseConv2D {
                stride,
                in_channels: c,
                out_channels: rng.random_range(1..=3),
            },
            spatial,
        ),
        "Dense" => {
            let f = rng.random_range(1..=8);
            (
                LayerSpec::Dense {
                    in_features: f,
                    out_features: rng.random_range(1..=4),
                },
                Shape::flat(f),
            )
        }
        "ReLU6" => (LayerSpec::ReLU6, spatial),
        "ReLU" => (LayerSpec::ReLU, spatial),
        "MaxPool2D" => (LayerSpec::MaxPool2D { size: 2, stride: 2 }, spatial),
        "GlobalAvgPool" => (LayerSpec::GlobalAvgPool, spatial),
        "InvertedResidual" => {
            let same = rng.random_bool(0.5);
            (
                LayerSpec::InvertedResidual {
                    in_channels: c,
                    out_channels: if same { c } else { rng.random_range(1..=3) },
                    expansion: rng.random_range(1..=3),
                    stride: if same { 1 } else { stride },
                },
                spatial,
            )
        }
        "ResidualBottleneck" => {
            let same = rng.random_bool(0.5);
            (
                LayerSpec::ResidualBottleneck {
                    in_channels: c,
                    mid_channels: rng.random_range(1..=2),
                    out_channels: if same { c } else { rng.random_range(1..=3) },
                    stride: if same { 1 } else { stride },
                },
                spatial,
            )
        }
        "Softmax" => (LayerSpec::Softmax, Shape::flat(rng.random_range(2..=5))),
        other => panic!("unknown kind {other}"),
    };
    let len = n * input.len();
    let data = match kind {
        "MaxPool2D" => spaced(rng, len),
        "ReLU" | "ReLU6" => {
            // keep away from the 6 kink as well by scaling into (-7, 7) off 0 and 6
            off_zero(rng, len)
                .into_iter()
                .map(|v| if v > 0.0 { v * 5.0 } else { v })
                .collect()
        }
        _ => uniform(rng, len, 1.0),
    };
    let x = Tensor::new(batch_shape(n, input), data).unwrap();
    let np = layer_param_count(&spec, input).unwrap();
    let p = uniform(rng, np, 0.8);
    (spec, x, p)
}

pub const KINDS: [&str; 11] = [
    "Conv2D",
    "DepthwiseConv2D",
    "PointwiseConv2D",
    "Dense",
    "ReLU6",
    "ReLU",
    "MaxPool2D",
    "GlobalAvgPool",
    "InvertedResidual",
    "ResidualBottleneck",
    "Softmax",
];

/// Deep stacks hold enough ReLU units that a 1e-3 step crosses kinks for
/// most parameters; in 64-bit a much smaller step is still far above
/// rounding noise.
pub const STEP: f64 = 1e-6;

/// Gradient of the loss with respect to one in `per` of the parameters,
/// re-running only the layers downstream of each perturbed parameter.
pub fn end_to_end_check(arch: ArchitectureId, seed: u64, per: usize) -> (f64, usize, usize) {
    let size = 32;
    let mut model = build_with::<f64>(arch, size, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed * 8 + arch as u64);
    let x: Vec<f64> = (0..size * size * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let label = 1;
    // Glorot init leaves biases at exactly zero, which puts dead units right
    // on the ReLU kink; jitter every parameter off it.
    for w in model.params_mut() {
        *w += rng.random_range(-0.05..0.05);
    }
    let batch = Tensor::new(vec![1, size, size, 3], x.clone()).unwrap();
    model.loss_and_grad(&batch, &[label]).unwrap();
    let grads = model.grads().to_vec();
    let acts = model.activations(&x).unwrap();

    let n = model.param_count();
    let picks: Vec<usize> = (0..n.div_ceil(per)).map(|_| rng.random_range(0..n)).collect();
    let ranges: Vec<_> = (0..model.layers().len()).map(|l| model.layer_param_range(l)).collect();
    let layer_of = |p: usize| ranges.iter().position(|r| r.contains(&p)).unwrap();
    let loss_at = |m: &ModelGraph<f64>, layer: usize| {
        let logits = m.forward_from(layer, &acts[layer]).unwrap();
        softmax_cross_entropy(&Tensor::new(vec![1, 2], logits).unwrap(), &[label]).unwrap().0
    };
    let diff = |m: &mut ModelGraph<f64>, p: usize, eps: f64| {
        let layer = layer_of(p);
        let orig = m.params()[p];
        m.params_mut()[p] = orig + eps;
        let up = loss_at(m, layer);
        m.params_mut()[p] = orig - eps;
        let down = loss_at(m, layer);
        m.params_mut()[p] = orig;
        (up - down) / (2.0 * eps)
    };
    let (mut a, mut num, mut skipped) = (Vec::new(), Vec::new(), 0);
    for &p in &picks {
        let full = diff(&mut model, p, STEP);
        let g = grads[p];
        if (full - g).abs() > 1e-4 * g.abs().max(1e-2) {
            // A ReLU or pooling kink inside the stencil shows up as a step-size
            // dependent estimate.
            let half = diff(&mut model, p, STEP / 2.0);
            if (full - half).abs() > 1e-5 * full.abs().max(1e-2) {
                skipped += 1;
                continue;
            }
        }
        a.push(g);
        num.push(full);
    }
    let d: f64 = a.iter().zip(&num).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let s = a.iter().map(|u| u * u).sum::<f64>().sqrt().max(num.iter().map(|u| u * u).sum::<f64>().sqrt());
    (d / s, skipped, picks.len())
}
