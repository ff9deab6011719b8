//! Patch-based tumor triage for whole-slide images.
//!
//! The crate covers the full diagnostic workflow at desk scale:
//!
//! * [`slide_store`]: tiled slides, ground-truth masks, manifests and a
//!   synthetic H&E-like slide generator,
//! * [`preprocess`]: HSV conversion, Otsu tissue segmentation, morphology and
//!   color standardization,
//! * [`patcher`]: random patch extraction, three-way labeling and slide-level
//!   fold assignment,
//! * [`augment`]: flips, rotation and zoom for training-time augmentation,
//! * [`nn`]: a small CPU tensor engine with exact backpropagation and SGD,
//! * [`zoo`]: four miniature architecture families,
//! * [`train`]: training, cross-validation and diagnostic metrics,
//! * [`heatmap`]: whole-slide probability heatmaps and ground-truth overlap,
//! * [`pipeline`]: corpus generation and dataset-level patching,
//! * [`bench`]: time-per-inference-step measurement.
//!
//! The guide in `book/` walks through each stage with runnable examples.

pub mod error;
pub mod mask;
pub mod preprocess;
pub mod slide_store;

pub use error::{Error, ErrorCategory, Result};
pub use mask::BinaryMask;
pub mod patcher;
pub mod seed;
pub mod augment;
pub mod nn;
pub mod zoo;
pub mod train;
pub mod heatmap;
pub mod pipeline;
pub mod bench;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/slides.md")]
    mod slides {}
    #[doc = include_str!("../../../book/src/tissue.md")]
    mod tissue {}
    #[doc = include_str!("../../../book/src/patches.md")]
    mod patches {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/heatmaps.md")]
    mod heatmaps {}
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    mod benchmarking {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
