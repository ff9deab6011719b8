//! Patch classifier training, slide-level cross-validation and evaluation.
//!
//! The three patch categories collapse to a binary task: positive-tumor is
//! class 1, both negative categories are class 0.

mod cv;
pub mod metrics;
mod plot;

use std::path::PathBuf;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cv::{
    augmentation_study, cross_validate, format_mean_std, mean_std, AugmentationStudy, CvOutcome, CvReport,
    FoldResult,
};
pub use metrics::{accuracy, auc, auc_ci, roc_curve, RocCurve, RocPoint};
pub use plot::render_roc_png;

use crate::augment::{augment, AugmentConfig};
use crate::error::{invariant, Error, Result};
use crate::nn::{images_to_batch, ModelGraph, Sgd, SgdConfig};
use crate::patcher::{Patch, PatchLabel};
use crate::seed::derive_seed;
use crate::zoo::{self, ArchitectureId};

/// Batch size used for inference-only passes.
pub const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub arch: ArchitectureId,
    pub sgd: SgdConfig,
    pub augment: Option<AugmentConfig>,
}

impl TrainOptions {
    pub fn new(arch: ArchitectureId) -> Self {
        TrainOptions {
            arch,
            sgd: SgdConfig::default(),
            augment: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Running accuracy over the epoch's (possibly augmented) batches.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub arch: ArchitectureId,
    pub input_size: usize,
    pub sgd: SgdConfig,
    pub augment: Option<AugmentConfig>,
    pub fold: Option<usize>,
    pub train_slides: Vec<String>,
    pub val_slides: Vec<String>,
    pub train_patches: usize,
    pub val_patches: usize,
    pub epochs: Vec<EpochRecord>,
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    /// SHA-256 of the validation tensors exactly as fed to the model.
    pub val_digest: Option<String>,
}

impl TrainRun {
    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("a run has at least one epoch")
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelGraph,
    pub run: TrainRun,
}

/// Binary target of a patch label.
pub fn class_of(label: PatchLabel) -> usize {
    label.class_index()
}

fn slide_ids(patches: &[&Patch]) -> Vec<String> {
    let mut ids: Vec<String> = patches.iter().map(|p| p.slide_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

fn input_size_of(patches: &[&Patch]) -> Result<usize> {
    let first = patches.first().ok_or_else(|| invariant!("no training patches"))?;
    let size = first.pixels.width();
    for p in patches {
        if p.pixels.dimensions() != (size, size) {
            return Err(invariant!("patches differ in size ({} and {}x{})", size, p.pixels.width(), p.pixels.height()));
        }
    }
    Ok(size as usize)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Class-1 softmax probability for each image.
pub fn predict_scores(model: &ModelGraph, images: &[&RgbImage]) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let batch = images_to_batch::<f32>(chunk)?;
        scores.extend(model.predict_proba(&batch, 1)?.into_iter().map(f64::from));
    }
    Ok(scores)
}

/// Argmax decision, which for two classes is `score > 0.5`.
pub fn decide(score: f64) -> usize {
    usize::from(score > 0.5)
}

fn validate_once(model: &ModelGraph, val: &[&Patch], digest: Option<&mut Sha256>) -> Result<f64> {
    let images: Vec<&RgbImage> = val.iter().map(|p| &p.pixels).collect();
    if let Some(d) = digest {
        for chunk in images.chunks(EVAL_BATCH) {
            let batch = images_to_batch::<f32>(chunk)?;
            for v in batch.data() {
                d.update(v.to_le_bytes());
            }
        }
    }
    let preds: Vec<usize> = predict_scores(model, &images)?.into_iter().map(decide).collect();
    let labels: Vec<usize> = val.iter().map(|p| class_of(p.label)).collect();
    accuracy(&preds, &labels)
}

fn with_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("training diverged in epoch {epoch}: {msg}")),
        other => other,
    }
}

/// Trains a freshly initialized model. Validation, when given, runs on
/// unaugmented patches after every epoch.
pub fn train(train: &[&Patch], val: &[&Patch], opts: &TrainOptions) -> Result<Trained> {
    opts.sgd.validate()?;
    if let Some(a) = &opts.augment {
        a.validate()?;
    }
    let input_size = input_size_of(train)?;
    let labels: Vec<usize> = train.iter().map(|p| class_of(p.label)).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(invariant!("training set holds a single class"));
    }
    let seed = opts.sgd.seed;
    let mut model = zoo::build(opts.arch, input_size, derive_seed(seed, "init"))?;
    let mut sgd = Sgd::new(opts.sgd)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle"));
    let mut aug_rng = opts.augment.map(|a| a.stream(0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(opts.sgd.epochs);
    let mut digest = None;

    for epoch in 1..=opts.sgd.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch_idx in order.chunks(opts.sgd.batch_size) {
            let augmented: Vec<RgbImage>;
            let images: Vec<&RgbImage> = match (&opts.augment, aug_rng.as_mut()) {
                (Some(cfg), Some(rng)) => {
                    augmented = batch_idx
                        .iter()
                        .map(|&i| augment(&train[i].pixels, cfg, rng))
                        .collect::<Result<_>>()?;
                    augmented.iter().collect()
                }
                _ => batch_idx.iter().map(|&i| &train[i].pixels).collect(),
            };
            let batch = images_to_batch::<f32>(&images)?;
            let y: Vec<usize> = batch_idx.iter().map(|&i| labels[i]).collect();
            let (loss, logits) = model.loss_grad_logits(&batch, &y).map_err(|e| with_epoch(e, epoch))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training diverged in epoch {epoch}: loss {loss}")));
            }
            loss_sum += f64::from(loss) * y.len() as f64;
            for (i, &label) in y.iter().enumerate() {
                let z = logits.sample(i);
                correct += usize::from(usize::from(z[1] > z[0]) == label);
            }
            sgd.step(&mut model).map_err(|e| with_epoch(e, epoch))?;
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            let mut d = (epoch == 1).then(Sha256::new);
            let acc = validate_once(&model, val, d.as_mut())?;
            if let Some(d) = d {
                digest = Some(hex(&d.finalize()));
            }
            Some(acc)
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc,
        });
    }

    let run = TrainRun {
        arch: opts.arch,
        input_size,
        sgd: opts.sgd,
        augment: opts.augment,
        fold: None,
        train_slides: slide_ids(train),
        val_slides: slide_ids(val),
        train_patches: train.len(),
        val_patches: val.len(),
        epochs,
        checkpoint: None,
        seed,
        val_digest: digest,
    };
    Ok(Trained { model, run })
}

/// Accuracy and ROC analysis of a model on labeled patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub patches: usize,
    pub accuracy: f64,
    pub roc: RocCurve,
    pub per_label: Vec<LabelAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub label: PatchLabel,
    pub patches: usize,
    pub accuracy: Option<f64>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const CI_LEVEL: f64 = 0.95;

pub fn evaluate(model: &ModelGraph, patches: &[&Patch], seed: u64) -> Result<Evaluation> {
    let images: Vec<&RgbImage> = patches.iter().map(|p| &p.pixels).collect();
    let scores = predict_scores(model, &images)?;
    let labels: Vec<usize> = patches.iter().map(|p| class_of(p.label)).collect();
    let positives: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
    let preds: Vec<usize> = scores.iter().map(|&s| decide(s)).collect();
    let roc = roc_curve(&scores, &positives)?.with_ci(&scores, &positives, BOOTSTRAP_RESAMPLES, CI_LEVEL, seed)?;
    let per_label = PatchLabel::ALL
        .into_iter()
        .map(|label| {
            let idx: Vec<usize> = (0..patches.len()).filter(|&i| patches[i].label == label).collect();
            let correct = idx.iter().filter(|&&i| preds[i] == labels[i]).count();
            LabelAccuracy {
                label,
                patches: idx.len(),
                accuracy: (!idx.is_empty()).then(|| correct as f64 / idx.len() as f64),
            }
        })
        .collect();
    Ok(Evaluation {
        patches: patches.len(),
        accuracy: accuracy(&preds, &labels)?,
        roc,
        per_label,
    })
}
