use std::f64::consts::PI;
use std::path::PathBuf;

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsi_triage::slide_store::*;

mod common;

use common::oracles::read_region_mismatches;

fn noise_image(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

#[test]
fn read_region_matches_untiled_crop() {
    let spec = SyntheticSlideSpec {
        width_px: 700,
        height_px: 530,
        tile_size: 128,
        seed: 17,
        ..Default::default()
    };
    let (slide, _) = generate_synthetic_slide(&spec).unwrap();
    assert_eq!(read_region_mismatches(&slide, 1000, 2), 0);
    assert!(slide.read_region(600, 0, 101, 10).is_err());
}

#[test]
fn edge_tiles_are_smaller() {
    let s = Slide::from_image("e", &noise_image(1000, 1000, 1), 256, SlideLabel::Normal).unwrap();
    assert_eq!(s.grid(), (4, 4));
    assert_eq!(s.tile(3, 3).dimensions(), (232, 232));
    assert_eq!(s.tile(0, 3).dimensions(), (232, 256));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn slide_dir_roundtrip_is_lossless(w in 1u32..90, h in 1u32..90, tile in 1u32..40, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let s = Slide::from_image("rt", &noise_image(w, h, seed), tile, SlideLabel::Tumor).unwrap();
        write_slide(&s, dir.path()).unwrap();
        let back = read_slide(dir.path()).unwrap();
        prop_assert_eq!(&back, &s);
        write_slide(&back, dir.path()).unwrap();
        prop_assert_eq!(read_slide(dir.path()).unwrap(), s);
    }
}

#[test]
fn mask_and_manifest_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mask) = generate_synthetic_slide(&SyntheticSlideSpec { width_px: 300, height_px: 200, tumor_nodule_count: 1, tumor_nodule_radius_px: (10, 20), seed: 5, ..Default::default() }).unwrap();
    let p = dir.path().join("m.png");
    write_mask(&mask, &p).unwrap();
    assert_eq!(read_mask(&p, "synthetic").unwrap(), mask);

    let m = DatasetManifest {
        seed: 9,
        entries: vec![
            ManifestEntry { slide: PathBuf::from("slides/a"), mask: Some(PathBuf::from("masks/a.png")), label: SlideLabel::Tumor },
            ManifestEntry { slide: PathBuf::from("slides/b"), mask: None, label: SlideLabel::Normal },
        ],
    };
    let mp = dir.path().join("manifest.json");
    write_manifest(&m, &mp).unwrap();
    assert_eq!(read_manifest(&mp).unwrap(), m);
}

#[test]
fn synthetic_generation_is_deterministic_and_consistent() {
    let spec = SyntheticSlideSpec { width_px: 512, height_px: 400, tile_size: 100, seed: 3, ..Default::default() };
    let (a, ma) = generate_synthetic_slide(&spec).unwrap();
    let (b, mb) = generate_synthetic_slide(&spec).unwrap();
    assert_eq!((&a, &ma), (&b, &mb));
    assert_eq!(ma.mask.dimensions(), a.dimensions());
    assert_eq!(a.label(), SlideLabel::Tumor);
    let other = generate_synthetic_slide(&SyntheticSlideSpec { seed: 4, ..spec }).unwrap();
    assert_ne!(other.0, a);
}

#[test]
fn nodule_area_is_within_radius_bounds() {
    for seed in 0..5 {
        let spec = SyntheticSlideSpec {
            width_px: 1024,
            height_px: 1024,
            tissue_fraction: 0.6,
            tumor_nodule_count: 3,
            tumor_nodule_radius_px: (40, 60),
            seed,
            ..Default::default()
        };
        let s = generate_synthetic_slide_with_tissue(&spec).unwrap();
        let n = s.mask.tumor_pixels() as f64;
        // Overlap can only shrink the union; a digital disc is within a rim of the ideal area.
        assert!(n <= 3.0 * PI * 61.0 * 61.0, "seed {seed}: {n}");
        assert!(n >= PI * 39.0 * 39.0, "seed {seed}: {n}");
        assert!(s.mask.mask.is_subset_of(&s.tissue));
    }
}

#[test]
fn normal_spec_gives_empty_mask() {
    let (s, m) = generate_synthetic_slide(&SyntheticSlideSpec { tumor_nodule_count: 0, width_px: 200, height_px: 200, ..Default::default() }).unwrap();
    assert_eq!(s.label(), SlideLabel::Normal);
    assert_eq!(m.tumor_pixels(), 0);
}
