//! Inference latency: median wall time of one forward pass over one batch.
//!
//! A "step" is a single [`ModelGraph::forward`] call on a fixed batch. The
//! measured region runs on a dedicated rayon pool, one thread by default.

use std::path::Path;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};
use crate::nn::{ModelGraph, Tensor};
use crate::zoo::{self, ArchitectureId};

pub const MIN_MEASURED: usize = 10;
/// A step must last at least this many timer ticks to be measurable.
pub const MIN_TICKS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub warmup: usize,
    pub reps: usize,
    pub threads: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            warmup: 5,
            reps: 30,
            threads: 1,
        }
    }
}

impl BenchOptions {
    pub fn validate(&self) -> Result<()> {
        if self.reps < MIN_MEASURED {
            return Err(invariant!("need at least {MIN_MEASURED} measured batches, got {}", self.reps));
        }
        if self.threads == 0 {
            return Err(invariant!("thread count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    /// `[N, H, W, C]` of the timed batch.
    pub input_shape: [usize; 4],
    pub batch_size: usize,
    pub threads: usize,
    pub warmup_batches: usize,
    pub measured_batches: usize,
    pub times_ms: Vec<f64>,
    pub ms_per_step: f64,
    /// Interquartile range of `times_ms`.
    pub iqr_ms: f64,
}

/// Median and interquartile range, linear interpolation between order
/// statistics.
pub fn summarize(times: &[f64]) -> Result<(f64, f64)> {
    if times.is_empty() {
        return Err(invariant!("no timings to summarize"));
    }
    let mut v = times.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Ok((q(0.5), q(0.75) - q(0.25)))
}

/// Smallest observable nonzero step of the monotonic clock.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..50 {
        let t0 = Instant::now();
        let mut t1 = Instant::now();
        while t1 == t0 {
            t1 = Instant::now();
        }
        best = best.min(t1 - t0);
    }
    best
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invariant!("cannot build a {threads}-thread pool: {e}"))
}

/// Times `reps` forward passes on `batch` after `warmup` untimed ones.
pub fn bench_inference(model: &ModelGraph, batch: &Tensor<f32>, opts: &BenchOptions) -> Result<BenchReport> {
    opts.validate()?;
    let shape = batch.shape();
    let input = model.input_shape();
    if shape.len() != 4 || shape[1..] != [input.h, input.w, input.c] {
        return Err(invariant!("batch shape {shape:?} does not fit model input {input:?}"));
    }
    let tick = timer_resolution();
    let times = pool(opts.threads)?.install(|| -> Result<Vec<Duration>> {
        for _ in 0..opts.warmup {
            model.forward(batch)?;
        }
        let mut times = Vec::with_capacity(opts.reps);
        for _ in 0..opts.reps {
            let t0 = Instant::now();
            let out = model.forward(batch)?;
            times.push(t0.elapsed());
            std::hint::black_box(out);
        }
        Ok(times)
    })?;
    let times_ms: Vec<f64> = times.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let (median, iqr) = summarize(&times_ms)?;
    if median <= 0.0 || median < (tick * MIN_TICKS).as_secs_f64() * 1e3 {
        return Err(invariant!(
            "step time {median} ms is below {MIN_TICKS} timer ticks of {tick:?}; use a larger batch"
        ));
    }
    Ok(BenchReport {
        model: model.name().to_owned(),
        input_shape: [shape[0], shape[1], shape[2], shape[3]],
        batch_size: shape[0],
        threads: opts.threads,
        warmup_batches: opts.warmup,
        measured_batches: opts.reps,
        times_ms,
        ms_per_step: median,
        iqr_ms: iqr,
    })
}

/// Uniform random batch in `[0, 1)`.
pub fn random_batch(batch: usize, input_size: usize, seed: u64) -> Result<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..batch * input_size * input_size * 3).map(|_| rng.random::<f32>()).collect();
    Tensor::new(vec![batch, input_size, input_size, 3], data)
}

/// `(baseline − candidate) / baseline`: 15 vs 48 ms is a 68.75% reduction.
pub fn relative_reduction(candidate_ms: f64, baseline_ms: f64) -> f64 {
    (baseline_ms - candidate_ms) / baseline_ms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchBench {
    pub arch: ArchitectureId,
    pub params: usize,
    pub report: BenchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub candidate: ArchitectureId,
    pub baseline: ArchitectureId,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchComparison {
    pub input_size: usize,
    pub batch_size: usize,
    /// Fastest first.
    pub rows: Vec<ArchBench>,
    /// The fastest architecture against each of the others.
    pub reductions: Vec<Reduction>,
}

/// Benchmarks every architecture on one shared random batch.
pub fn compare_archs(input_size: usize, batch: usize, opts: &BenchOptions, seed: u64) -> Result<ArchComparison> {
    let data = random_batch(batch, input_size, seed)?;
    let mut rows = Vec::with_capacity(ArchitectureId::ALL.len());
    for arch in ArchitectureId::ALL {
        let model = zoo::build(arch, input_size, seed)?;
        let report = bench_inference(&model, &data, opts)?;
        rows.push(ArchBench {
            arch,
            params: model.param_count(),
            report,
        });
    }
    rows.sort_by(|a, b| a.report.ms_per_step.total_cmp(&b.report.ms_per_step));
    let best = &rows[0];
    let reductions = rows[1..]
        .iter()
        .map(|r| Reduction {
            candidate: best.arch,
            baseline: r.arch,
            reduction: relative_reduction(best.report.ms_per_step, r.report.ms_per_step),
        })
        .collect();
    Ok(ArchComparison {
        input_size,
        batch_size: batch,
        rows,
        reductions,
    })
}

impl ArchComparison {
    pub fn rank_of(&self, arch: ArchitectureId) -> Option<usize> {
        self.rows.iter().position(|r| r.arch == arch)
    }

    pub fn ms_of(&self, arch: ArchitectureId) -> Option<f64> {
        self.rows.iter().find(|r| r.arch == arch).map(|r| r.report.ms_per_step)
    }

    /// Aligned text table followed by the reductions.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "input {0}x{0}, batch {1}, {2} thread(s)\n{3:<5} {4:<8} {5:>9} {6:>12} {7:>9}\n",
            self.input_size,
            self.batch_size,
            self.rows.first().map_or(1, |r| r.report.threads),
            "rank",
            "arch",
            "params",
            "ms/step",
            "iqr ms"
        );
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{:<5} {:<8} {:>9} {:>12.3} {:>9.3}\n",
                i + 1,
                r.arch.cli_name(),
                r.params,
                r.report.ms_per_step,
                r.report.iqr_ms
            ));
        }
        for red in &self.reductions {
            out.push_str(&format!(
                "{} reduces time per step vs {} by {:.1}%\n",
                red.candidate.cli_name(),
                red.baseline.cli_name(),
                red.reduction * 100.0
            ));
        }
        out
    }
}

/// Bar chart of ms/step, one bar per row, fastest on the left.
pub fn render_bench_png(cmp: &ArchComparison, path: &Path) -> Result<()> {
    let (w, h, margin) = (80 * cmp.rows.len().max(1) as u32 + 40, 240u32, 20u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let max = cmp.rows.iter().map(|r| r.report.ms_per_step).fold(0.0, f64::max);
    let palette = [[70, 130, 180], [200, 90, 70], [90, 160, 90], [150, 100, 170]];
    for (i, r) in cmp.rows.iter().enumerate() {
        let bar_h = if max > 0.0 {
            ((r.report.ms_per_step / max) * f64::from(h - 2 * margin)).round() as u32
        } else {
            0
        };
        let x0 = margin + 80 * i as u32 + 10;
        let colour = palette[r.arch as usize % palette.len()];
        for y in (h - margin - bar_h)..(h - margin) {
            for x in x0..x0 + 60 {
                img.put_pixel(x, y, Rgb(colour));
            }
        }
    }
    for x in margin..w - margin {
        img.put_pixel(x, h - margin, Rgb([0, 0, 0]));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::image(path, e))
}
