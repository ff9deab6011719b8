//! Miniature members of the four compared architecture families.
//!
//! | arch   | stem          | body                                          | head                    |
//! |--------|---------------|-----------------------------------------------|-------------------------|
//! | mobile | 3×3/2, 3→8    | inverted residual t=6: 8→12/2, 12→12, 12→16/2, 16→16 | GAP, Dense(2)    |
//! | vgg    | none          | double 3×3 conv + maxpool at 16, 32, 64, 128  | Dense(64), ReLU, Dense(2) |
//! | res50  | 3×3/2, 3→16   | bottlenecks at 32, 64, 96, 128, depths 2-2-2-2 | GAP, Dense(2)          |
//! | res101 | 3×3/2, 3→16   | bottlenecks at 32, 64, 96, 128, depths 2-4-8-2 | GAP, Dense(2)          |
//!
//! Bottleneck mid width is a quarter of the stage width; the first block of
//! every stage after the first downsamples by 2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};
use crate::nn::{LayerSpec, ModelGraph, Padding, Scalar, Shape};

pub const INPUT_SIZES: [usize; 3] = [32, 64, 96];
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchitectureId {
    #[serde(rename = "mobile")]
    MobileMini,
    #[serde(rename = "vgg")]
    VggMini,
    #[serde(rename = "res50")]
    Res50Mini,
    #[serde(rename = "res101")]
    Res101Mini,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 4] = [
        ArchitectureId::MobileMini,
        ArchitectureId::VggMini,
        ArchitectureId::Res50Mini,
        ArchitectureId::Res101Mini,
    ];

    /// Short name used on the command line and in file names.
    pub fn cli_name(self) -> &'static str {
        match self {
            ArchitectureId::MobileMini => "mobile",
            ArchitectureId::VggMini => "vgg",
            ArchitectureId::Res50Mini => "res50",
            ArchitectureId::Res101Mini => "res101",
        }
    }

    pub fn model_name(self) -> &'static str {
        match self {
            ArchitectureId::MobileMini => "MobileMini",
            ArchitectureId::VggMini => "VggMini",
            ArchitectureId::Res50Mini => "Res50Mini",
            ArchitectureId::Res101Mini => "Res101Mini",
        }
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchitectureId::ALL
            .into_iter()
            .find(|a| a.cli_name() == s || a.model_name() == s)
            .ok_or_else(|| invariant!("unknown architecture {s:?} (expected mobile, vgg, res50 or res101)"))
    }
}

fn conv3(cin: usize, cout: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv2D {
        kernel: 3,
        stride,
        padding: Padding::Same,
        in_channels: cin,
        out_channels: cout,
    }
}

fn mobile() -> Vec<LayerSpec> {
    let mut layers = vec![conv3(3, 8, 2), LayerSpec::ReLU6];
    for (cin, cout, stride) in [(8, 12, 2), (12, 12, 1), (12, 16, 2), (16, 16, 1)] {
        layers.push(LayerSpec::InvertedResidual {
            in_channels: cin,
            out_channels: cout,
            expansion: 6,
            stride,
        });
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(LayerSpec::Dense {
        in_features: 16,
        out_features: NUM_CLASSES,
    });
    layers
}

fn vgg(input_size: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut cin = 3;
    for width in [16, 32, 64, 128] {
        layers.extend([
            conv3(cin, width, 1),
            LayerSpec::ReLU,
            conv3(width, width, 1),
            LayerSpec::ReLU,
            LayerSpec::MaxPool2D { size: 2, stride: 2 },
        ]);
        cin = width;
    }
    let side = input_size / 16;
    layers.extend([
        LayerSpec::Dense {
            in_features: side * side * cin,
            out_features: 64,
        },
        LayerSpec::ReLU,
        LayerSpec::Dense {
            in_features: 64,
            out_features: NUM_CLASSES,
        },
    ]);
    layers
}

fn resnet(depths: [usize; 4]) -> Vec<LayerSpec> {
    let mut layers = vec![conv3(3, 16, 2), LayerSpec::ReLU];
    let mut cin = 16;
    for (stage, (width, depth)) in [32, 64, 96, 128].into_iter().zip(depths).enumerate() {
        for block in 0..depth {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            layers.push(LayerSpec::ResidualBottleneck {
                in_channels: cin,
                mid_channels: width / 4,
                out_channels: width,
                stride,
            });
            cin = width;
        }
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(LayerSpec::Dense {
        in_features: cin,
        out_features: NUM_CLASSES,
    });
    layers
}

/// Layer sequence of `arch` for square RGB inputs of `input_size`.
pub fn layer_specs(arch: ArchitectureId, input_size: usize) -> Result<Vec<LayerSpec>> {
    if !INPUT_SIZES.contains(&input_size) {
        return Err(invariant!(
            "unsupported input size {input_size} (expected one of {INPUT_SIZES:?})"
        ));
    }
    Ok(match arch {
        ArchitectureId::MobileMini => mobile(),
        ArchitectureId::VggMini => vgg(input_size),
        ArchitectureId::Res50Mini => resnet([2, 2, 2, 2]),
        ArchitectureId::Res101Mini => resnet([2, 4, 8, 2]),
    })
}

pub fn build_with<T: Scalar>(arch: ArchitectureId, input_size: usize, seed: u64) -> Result<ModelGraph<T>> {
    let layers = layer_specs(arch, input_size)?;
    let mut model = ModelGraph::new(arch.model_name(), Shape::new(input_size, input_size, 3), layers)?;
    model.init_glorot(seed);
    Ok(model)
}

/// Builds `arch` with seeded Glorot initialization.
pub fn build(arch: ArchitectureId, input_size: usize, seed: u64) -> Result<ModelGraph> {
    build_with(arch, input_size, seed)
}

pub fn param_count<T: Scalar>(model: &ModelGraph<T>) -> usize {
    model.param_count()
}

/// Multiply-accumulate operations for one inference at the model's input
/// size.
pub fn flops_estimate<T: Scalar>(model: &ModelGraph<T>) -> u64 {
    model.macs_per_sample()
}
