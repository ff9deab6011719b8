use image::{Rgb, RgbImage};
use proptest::prelude::*;
use wsi_triage::heatmap::*;
use wsi_triage::nn::images_to_batch;
use wsi_triage::slide_store::{AnnotationMask, Slide, SlideLabel};
use wsi_triage::zoo::{self, ArchitectureId};
use wsi_triage::BinaryMask;

fn slide(w: u32, h: u32) -> Slide {
    let img = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]));
    Slide::from_image("s", &img, 48, SlideLabel::Tumor).unwrap()
}

fn model() -> wsi_triage::nn::ModelGraph {
    zoo::build(ArchitectureId::MobileMini, 32, 4).unwrap()
}

#[test]
fn grid_geometry_example() {
    let h = Heatmap::empty("s", 1024, 1024, 256, 256).unwrap();
    assert_eq!((h.grid_w, h.grid_h), (4, 4));
    assert_eq!(h.cell_origin(2, 3), (768, 512));
    assert!(Heatmap::empty("s", 100, 300, 128, 128).is_err());
}

proptest! {
    #[test]
    fn grid_matches_enumerated_origins(dim in 1u32..400, patch in 1u32..100, stride in 1u32..120) {
        prop_assume!(patch <= dim);
        let origins = (0..dim).filter(|o| o % stride == 0 && o + patch <= dim).count() as u32;
        prop_assert_eq!(grid_extent(dim, patch, stride).unwrap(), origins);
    }

    #[test]
    fn dice_iou_identity(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let n = bits.len() as u32;
        let pred = BinaryMask::from_fn(n, 1, |x, _| bits[x as usize].0);
        let truth = BinaryMask::from_fn(n, 1, |x, _| bits[x as usize].1);
        let c = compare_grids(&pred, &truth, 0.9).unwrap();
        prop_assert!((c.dice - 2.0 * c.iou / (1.0 + c.iou)).abs() < 1e-12);
        prop_assert_eq!(c.true_positive + c.false_positive + c.false_negative + c.true_negative, n as usize);
    }

    #[test]
    fn higher_threshold_flags_subset(probs in prop::collection::vec(0.0f64..=1.0, 1..64), lo in 0.01f64..0.5, hi in 0.5f64..0.99) {
        let h = Heatmap { slide_id: "s".into(), grid_w: probs.len() as u32, grid_h: 1, stride_px: 8, patch_size_px: 8, probs };
        let a = threshold_heatmap(&h, lo).unwrap();
        let b = threshold_heatmap(&h, hi).unwrap();
        prop_assert!(b.is_subset_of(&a));
    }
}

#[test]
fn threshold_is_inclusive() {
    let h = Heatmap { slide_id: "s".into(), grid_w: 3, grid_h: 1, stride_px: 8, patch_size_px: 8, probs: vec![0.95, 0.9, 0.89] };
    let m = threshold_heatmap(&h, 0.9).unwrap();
    assert_eq!((m.get(0, 0), m.get(1, 0), m.get(2, 0)), (true, true, false));
    assert!(threshold_heatmap(&h, 1.0).is_err());
    assert!(threshold_heatmap(&h, 0.0).is_err());
}

#[test]
fn background_slide_gives_zero_heatmap() {
    let s = slide(128, 96);
    let tissue = BinaryMask::new(128, 96);
    let h = predict_heatmap(&s, &model(), &tissue, &HeatmapConfig::for_patch(32)).unwrap();
    assert_eq!((h.grid_w, h.grid_h), (4, 3));
    assert!(h.probs.iter().all(|&p| p == 0.0));
}

#[test]
fn single_patch_equals_direct_model_call() {
    let s = slide(32, 32);
    let m = model();
    let tissue = BinaryMask::from_fn(32, 32, |_, _| true);
    let h = predict_heatmap(&s, &m, &tissue, &HeatmapConfig::for_patch(32)).unwrap();
    assert_eq!(h.probs.len(), 1);
    let img = s.read_region(0, 0, 32, 32).unwrap();
    let logits = m.forward(&images_to_batch::<f32>(&[&img]).unwrap()).unwrap();
    let z = logits.sample(0);
    let direct = 1.0 / (1.0 + (z[0] - z[1]).exp());
    let via_model = m.predict_proba(&images_to_batch::<f32>(&[&img]).unwrap(), 1).unwrap()[0];
    assert_eq!(h.probs[0], f64::from(via_model));
    assert!((h.probs[0] - f64::from(direct)).abs() < 1e-6);
}

#[test]
fn visits_exactly_the_tissue_qualifying_cells() {
    let s = slide(160, 128);
    let tissue = BinaryMask::from_fn(160, 128, |x, y| (x as i64 - 70).pow(2) + (y as i64 - 60).pow(2) < 55 * 55);
    let h = predict_heatmap(&s, &model(), &tissue, &HeatmapConfig::for_patch(32)).unwrap();
    let mut expected = 0;
    for (r, c) in h.cells() {
        let (x0, y0) = h.cell_origin(r, c);
        let mut n = 0;
        for y in y0..y0 + 32 {
            for x in x0..x0 + 32 {
                n += usize::from(tissue.get(x, y));
            }
        }
        let qualifies = n * 2 >= 32 * 32;
        expected += usize::from(qualifies);
        assert_eq!(h.get(r, c) > 0.0, qualifies, "cell {r},{c}");
    }
    assert!(expected > 0);
    assert!(h.probs.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn oversized_patch_is_rejected() {
    let s = slide(24, 64);
    let tissue = BinaryMask::new(24, 64);
    assert!(predict_heatmap(&s, &model(), &tissue, &HeatmapConfig::for_patch(32)).is_err());
}

#[test]
fn comparison_against_truth() {
    let mut h = Heatmap::empty("s", 64, 64, 16, 16).unwrap();
    let mut mask = BinaryMask::new(64, 64);
    // One tumor pixel inside the central window of cell (1, 2), one just outside that of cell (3, 0).
    mask.set(2 * 16 + 6, 16 + 9, true);
    mask.set(2, 3 * 16 + 1, true);
    let ann = AnnotationMask { slide_id: "s".into(), mask };
    let truth = ground_truth_grid(&h, &ann).unwrap();
    assert_eq!(truth.count(), 1);
    assert!(truth.get(2, 1));

    h.probs[4 + 2] = 0.97;
    let exact = compare_to_ground_truth(&h, &ann, 0.9).unwrap();
    assert_eq!((exact.dice, exact.iou), (1.0, 1.0));
    h.probs[4 + 2] = 0.0;
    h.probs[0] = 0.99;
    let disjoint = compare_to_ground_truth(&h, &ann, 0.9).unwrap();
    assert_eq!(disjoint.dice, 0.0);

    let empty = compare_grids(&BinaryMask::new(4, 4), &BinaryMask::new(4, 4), 0.9).unwrap();
    assert_eq!(empty.dice, 1.0);
    assert!(compare_grids(&BinaryMask::new(4, 4), &BinaryMask::new(4, 5), 0.9).is_err());
    let other = AnnotationMask { slide_id: "t".into(), mask: BinaryMask::new(64, 64) };
    assert!(compare_to_ground_truth(&h, &other, 0.9).is_err());
    let small = AnnotationMask { slide_id: "s".into(), mask: BinaryMask::new(40, 64) };
    assert!(compare_to_ground_truth(&h, &small, 0.9).is_err());
}

#[test]
fn rendering_and_sidecar_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = Heatmap::empty("s", 96, 64, 32, 32).unwrap();
    h.probs = vec![1.0, 0.5, 0.0, 0.25, 0.95, 0.1];
    let png = dir.path().join("heat.png");
    render_heatmap(&h, 0.9, &png).unwrap();
    let img = image::open(&png).unwrap().to_luma8();
    assert_eq!(img.dimensions(), (3, 2));
    assert_eq!(img.get_pixel(0, 0).0[0], 255);
    assert_eq!(img.get_pixel(1, 0).0[0], 128);
    let side = read_heatmap_sidecar(&dir.path().join("heat.json")).unwrap();
    assert_eq!(side.threshold, 0.9);
    let back = side.heatmap().unwrap();
    assert_eq!(back, h);
    for (r, c) in back.cells() {
        assert_eq!(back.cell_origin(r, c), h.cell_origin(r, c));
    }

    let s = slide(96, 64);
    let mut mask = BinaryMask::new(96, 64);
    mask.set(40, 40, true);
    let ann = AnnotationMask { slide_id: "s".into(), mask };
    let ov = dir.path().join("overlay.png");
    render_overlay(&s, &h, Some(&ann), 0.9, &ov).unwrap();
    let ovi = image::open(&ov).unwrap().to_rgb8();
    assert_eq!(ovi.dimensions(), (96, 64));
    assert_eq!(ovi.get_pixel(40, 40).0, [0, 200, 0]);
}
