use wsi_triage::nn::{LayerSpec, ModelGraph, Shape, Tensor};
use wsi_triage::zoo::{build, flops_estimate, param_count, ArchitectureId};

use ArchitectureId::*;

mod common;

use common::gradcheck::end_to_end_check;
use common::oracles::enumerate_params;

#[test]
fn every_arch_emits_two_logits() {
    for size in [32, 64, 96] {
        for arch in ArchitectureId::ALL {
            let m = build(arch, size, 1).unwrap();
            let y = m.forward(&Tensor::zeros(vec![1, size, size, 3])).unwrap();
            assert_eq!(y.shape(), &[1, 2], "{arch} at {size}");
            assert!(y.is_finite());
        }
    }
}

#[test]
fn param_counts_match_enumeration_and_budget() {
    for arch in ArchitectureId::ALL {
        let m = build(arch, 64, 0).unwrap();
        assert_eq!(param_count(&m), enumerate_params(m.layers()), "{arch}");
        assert!(param_count(&m) < 2_000_000, "{arch}");
        let slots: usize = m.param_slots().iter().map(|s| s.len).sum();
        assert_eq!(slots, param_count(&m));
    }
}

#[test]
fn size_and_cost_ordering_mirrors_full_scale() {
    for size in [32, 64, 96] {
        let order = [MobileMini, Res50Mini, Res101Mini, VggMini];
        let models: Vec<_> = order.iter().map(|&a| build(a, size, 0).unwrap()).collect();
        for w in models.windows(2) {
            assert!(param_count(&w[0]) < param_count(&w[1]), "{} vs {}", w[0].name(), w[1].name());
            assert!(flops_estimate(&w[0]) < flops_estimate(&w[1]), "{} vs {}", w[0].name(), w[1].name());
        }
    }
}

#[test]
fn dense_and_depthwise_counts() {
    let dense = ModelGraph::<f32>::new(
        "d",
        Shape::flat(10),
        vec![LayerSpec::Dense {
            in_features: 10,
            out_features: 2,
        }],
    )
    .unwrap();
    assert_eq!(param_count(&dense), 22);
    assert_eq!(flops_estimate(&dense), 20);
    let dw = ModelGraph::<f32>::new(
        "dw",
        Shape::new(4, 4, 8),
        vec![LayerSpec::DepthwiseConv2D {
            kernel: 3,
            stride: 1,
            padding: wsi_triage::nn::Padding::Same,
            channels: 8,
        }],
    )
    .unwrap();
    assert_eq!(param_count(&dw), 80);
    assert_eq!(flops_estimate(&dw), 4 * 4 * 9 * 8);
}

#[test]
fn seeded_init_is_deterministic() {
    for arch in ArchitectureId::ALL {
        let a = build(arch, 32, 42).unwrap();
        let b = build(arch, 32, 42).unwrap();
        let c = build(arch, 32, 43).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }
}

#[test]
fn end_to_end_gradients_match_differences() {
    for arch in ArchitectureId::ALL {
        let (err, skipped, total) = end_to_end_check(arch, 7, 100);
        assert!(err < 1e-3, "{arch}: rel err {err:e}");
        assert!(skipped * 20 <= total, "{arch}: {skipped} of {total} samples on kinks");
    }
}
