use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsi_triage::augment::AugmentConfig;
use wsi_triage::patcher::{FoldAssignment, Patch, PatchLabel};
use wsi_triage::train::*;
use wsi_triage::zoo::ArchitectureId;

mod common;

use common::oracles::{mann_whitney, random_dataset};

#[test]
fn auc_matches_mann_whitney_on_random_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (s, l) = random_dataset(&mut rng);
        let a = auc(&s, &l).unwrap();
        assert!((a - mann_whitney(&s, &l)).abs() < 1e-12);
    }
}

#[test]
fn ci_contains_point_auc_for_most_datasets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    for k in 0..100 {
        let labels: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| rng.random::<f64>() + if l { 0.4 } else { 0.0 })
            .collect();
        let a = auc(&scores, &labels).unwrap();
        let (lo, hi) = auc_ci(&scores, &labels, 1000, 0.95, k).unwrap();
        assert!(lo <= hi);
        hits += usize::from(lo <= a && a <= hi);
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn ci_is_seeded_and_needs_two_per_class() {
    let labels = [true, false, true, false, true, false];
    let scores = [0.9, 0.1, 0.4, 0.6, 0.8, 0.3];
    assert_eq!(
        auc_ci(&scores, &labels, 200, 0.95, 9).unwrap(),
        auc_ci(&scores, &labels, 200, 0.95, 9).unwrap()
    );
    assert!(auc_ci(&[0.2, 0.3, 0.4], &[true, false, false], 100, 0.95, 1).is_err());
    let c = roc_curve(&scores, &labels).unwrap().with_ci(&scores, &labels, 200, 0.95, 1).unwrap();
    assert!(c.ci_low <= c.auc && c.auc <= c.ci_high);
}

proptest! {
    #[test]
    fn roc_is_monotone_and_transform_invariant(
        raw in prop::collection::vec((0u8..20, any::<bool>()), 2..60),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let labels: Vec<bool> = raw.iter().map(|r| r.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = raw.iter().map(|r| f64::from(r.0) / 20.0).collect();
        let curve = roc_curve(&scores, &labels).unwrap();
        let first = curve.points[0];
        let last = *curve.points.last().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        prop_assert!((0.0..=1.0).contains(&curve.auc));
        let mapped: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
        prop_assert_eq!(auc(&mapped, &labels).unwrap(), curve.auc);
    }

    #[test]
    fn accuracy_of_flipped_predictions_is_complement(
        pairs in prop::collection::vec((0usize..2, 0usize..2), 1..100),
    ) {
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let flipped: Vec<usize> = preds.iter().map(|p| 1 - p).collect();
        let a = accuracy(&preds, &labels).unwrap();
        let b = accuracy(&flipped, &labels).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        let correct = pairs.iter().filter(|p| p.0 == p.1).count();
        prop_assert_eq!(a, correct as f64 / pairs.len() as f64);
    }
}

/// Flat-coloured patches: tumor purple, everything else pink, with noise.
fn colour_patches(slides: usize, per_slide: usize, seed: u64) -> Vec<Patch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in 0..slides {
        for i in 0..per_slide {
            let tumor = i % 2 == 0;
            let base: [i32; 3] = if tumor { [120, 60, 160] } else { [230, 160, 200] };
            let img = RgbImage::from_fn(32, 32, |_, _| {
                Rgb(base.map(|c| (c + rng.random_range(-20..=20)).clamp(0, 255) as u8))
            });
            out.push(Patch {
                slide_id: format!("s{s:02}"),
                x: 0,
                y: (i * 32) as u32,
                size: 32,
                label: if tumor { PatchLabel::PositiveTumor } else { PatchLabel::NegativeTumor },
                pixels: img,
            });
        }
    }
    out
}

fn opts(epochs: usize) -> TrainOptions {
    let mut o = TrainOptions::new(ArchitectureId::MobileMini);
    o.sgd.epochs = epochs;
    o.sgd.batch_size = 8;
    o.sgd.seed = 3;
    o
}

#[test]
fn separable_colour_patches_are_learned() {
    let patches = colour_patches(4, 50, 1);
    let refs: Vec<&Patch> = patches.iter().collect();
    let run = train(&refs, &[], &opts(10)).unwrap().run;
    assert_eq!(run.epochs.len(), 10);
    assert!(run.final_epoch().train_acc >= 0.95, "{:?}", run.final_epoch());
    for e in &run.epochs {
        assert!((0.0..=1.0).contains(&e.train_acc));
    }
}

#[test]
fn training_is_deterministic() {
    let patches = colour_patches(2, 20, 2);
    let refs: Vec<&Patch> = patches.iter().collect();
    let a = train(&refs, &refs[..8], &opts(2)).unwrap();
    let b = train(&refs, &refs[..8], &opts(2)).unwrap();
    assert_eq!(a.run, b.run);
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn bad_inputs_are_rejected() {
    let patches = colour_patches(1, 10, 3);
    let refs: Vec<&Patch> = patches.iter().collect();
    assert!(train(&refs, &[], &opts(0)).is_err());
    let one_class: Vec<&Patch> = refs.iter().copied().filter(|p| p.label == PatchLabel::PositiveTumor).collect();
    assert!(train(&one_class, &[], &opts(1)).is_err());
    assert!(train(&[], &[], &opts(1)).is_err());
}

fn folds_for(slides: usize, k: usize) -> FoldAssignment {
    FoldAssignment {
        k,
        folds: (0..slides).map(|s| (format!("s{s:02}"), s % k)).collect::<BTreeMap<_, _>>(),
    }
}

#[test]
fn cross_validation_partitions_slides() {
    let patches = colour_patches(10, 8, 4);
    let folds = folds_for(10, 5);
    let out = cross_validate(&patches, &folds, &opts(1)).unwrap();
    assert_eq!(out.runs.len(), 5);
    assert_eq!(out.report.folds.len(), 5);
    let mut seen = Vec::new();
    for run in &out.runs {
        for v in &run.val_slides {
            assert!(!run.train_slides.contains(v));
            seen.push(v.clone());
        }
        assert_eq!(run.train_slides.len() + run.val_slides.len(), 10);
    }
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 10);
    let (m, s) = mean_std(&out.report.folds.iter().map(|f| f.val_acc).collect::<Vec<_>>());
    assert_eq!((out.report.val_mean, out.report.val_std), (m, s));
    assert!(out.report.to_text().contains(" ± "));
}

#[test]
fn cross_validation_rejects_unassigned_slides() {
    let patches = colour_patches(10, 4, 5);
    let mut folds = folds_for(10, 5);
    folds.folds.remove("s03");
    assert!(cross_validate(&patches, &folds, &opts(1)).is_err());
}

#[test]
fn augmentation_arms_share_validation_data() {
    let patches = colour_patches(6, 6, 6);
    let folds = folds_for(6, 3);
    let (study, on, off) = augmentation_study(&patches, &folds, &opts(1), AugmentConfig::default()).unwrap();
    for (a, b) in on.runs.iter().zip(&off.runs) {
        assert!(a.val_digest.is_some());
        assert_eq!(a.val_digest, b.val_digest);
    }
    for row in study.table() {
        for v in row {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    assert_eq!(study.to_text().lines().count(), 3);
}

#[test]
fn evaluation_reports_per_label_accuracy() {
    let patches = colour_patches(4, 50, 7);
    let refs: Vec<&Patch> = patches.iter().collect();
    let model = train(&refs, &[], &opts(10)).unwrap().model;
    let test = colour_patches(2, 20, 8);
    let trefs: Vec<&Patch> = test.iter().collect();
    let ev = evaluate(&model, &trefs, 1).unwrap();
    assert_eq!(ev.patches, 40);
    assert!(ev.roc.auc >= 0.95);
    assert!(ev.roc.ci_low <= ev.roc.auc && ev.roc.auc <= ev.roc.ci_high);
    let pos = ev.per_label.iter().find(|l| l.label == PatchLabel::PositiveTumor).unwrap();
    assert_eq!(pos.patches, 20);
    let normal = ev.per_label.iter().find(|l| l.label == PatchLabel::NegativeNormal).unwrap();
    assert_eq!((normal.patches, normal.accuracy), (0, None));
}

#[test]
fn roc_png_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roc.png");
    let c = roc_curve(&[0.9, 0.2, 0.6, 0.4], &[true, false, true, false]).unwrap();
    render_roc_png(&c, 128, &path).unwrap();
    let img = image::open(&path).unwrap();
    assert_eq!((img.width(), img.height()), (128, 128));
}
