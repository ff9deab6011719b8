use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{train, TrainOptions, TrainRun, Trained};
use crate::augment::AugmentConfig;
use crate::error::{invariant, Result};
use crate::patcher::{FoldAssignment, Patch};
use crate::seed::derive_seed;

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `"0.963 ± 0.005"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_slides: Vec<String>,
    pub val_slides: Vec<String>,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub train_mean: f64,
    pub train_std: f64,
    pub val_mean: f64,
    pub val_std: f64,
}

impl CvReport {
    pub fn from_folds(k: usize, folds: Vec<FoldResult>) -> Self {
        let train: Vec<f64> = folds.iter().map(|f| f.train_acc).collect();
        let val: Vec<f64> = folds.iter().map(|f| f.val_acc).collect();
        let (train_mean, train_std) = mean_std(&train);
        let (val_mean, val_std) = mean_std(&val);
        CvReport {
            k,
            folds,
            train_mean,
            train_std,
            val_mean,
            val_std,
        }
    }

    pub fn train_summary(&self) -> String {
        format_mean_std(self.train_mean, self.train_std)
    }

    pub fn val_summary(&self) -> String {
        format_mean_std(self.val_mean, self.val_std)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}-fold cross-validation\n", self.k);
        for f in &self.folds {
            out.push_str(&format!(
                "fold {}: train {:.3}  validation {:.3}  ({} validation slides)\n",
                f.fold,
                f.train_acc,
                f.val_acc,
                f.val_slides.len()
            ));
        }
        out.push_str(&format!("training accuracy (mean ± standard deviation): {}\n", self.train_summary()));
        out.push_str(&format!("validation accuracy (mean ± standard deviation): {}\n", self.val_summary()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    pub runs: Vec<TrainRun>,
}

/// Trains one model per fold on the other folds' slides and validates on the
/// held-out fold. Training accuracy is the final epoch's running accuracy;
/// validation accuracy is the final epoch's.
pub fn cross_validate(patches: &[Patch], folds: &FoldAssignment, opts: &TrainOptions) -> Result<CvOutcome> {
    cross_validate_with(patches, folds, opts, |_, _| Ok(()))
}

/// [`cross_validate`] with a hook receiving each fold's trained model.
pub fn cross_validate_with(
    patches: &[Patch],
    folds: &FoldAssignment,
    opts: &TrainOptions,
    mut on_fold: impl FnMut(usize, &Trained) -> Result<()>,
) -> Result<CvOutcome> {
    let mut fold_of = Vec::with_capacity(patches.len());
    for p in patches {
        let f = folds
            .fold_of(&p.slide_id)
            .ok_or_else(|| invariant!("slide {} has no fold", p.slide_id))?;
        fold_of.push(f);
    }
    let mut results = Vec::with_capacity(folds.k);
    let mut runs = Vec::with_capacity(folds.k);
    for fold in 0..folds.k {
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (p, &f) in patches.iter().zip(&fold_of) {
            if f == fold {
                va.push(p);
            } else {
                tr.push(p);
            }
        }
        let train_ids: BTreeSet<&str> = tr.iter().map(|p| p.slide_id.as_str()).collect();
        let val_ids: BTreeSet<&str> = va.iter().map(|p| p.slide_id.as_str()).collect();
        if let Some(id) = train_ids.intersection(&val_ids).next() {
            return Err(invariant!("slide {id} leaks between training and validation of fold {fold}"));
        }
        if va.is_empty() {
            return Err(invariant!("fold {fold} has no validation patches"));
        }
        let mut fold_opts = *opts;
        fold_opts.sgd.seed = derive_seed(opts.sgd.seed, &format!("fold{fold}"));
        let trained = train(&tr, &va, &fold_opts)?;
        on_fold(fold, &trained)?;
        let mut run = trained.run;
        run.fold = Some(fold);
        let last = *run.final_epoch();
        results.push(FoldResult {
            fold,
            train_slides: run.train_slides.clone(),
            val_slides: run.val_slides.clone(),
            train_acc: last.train_acc,
            val_acc: last.val_acc.expect("validation ran"),
        });
        runs.push(run);
    }
    Ok(CvOutcome {
        report: CvReport::from_folds(folds.k, results),
        runs,
    })
}

/// Cross-validation with and without augmentation under identical folds and
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationStudy {
    pub with_augmentation: CvReport,
    pub without_augmentation: CvReport,
    pub augment: AugmentConfig,
}

impl AugmentationStudy {
    /// Rows train/validation, columns augmentation on/off.
    pub fn table(&self) -> [[f64; 2]; 2] {
        [
            [self.with_augmentation.train_mean, self.without_augmentation.train_mean],
            [self.with_augmentation.val_mean, self.without_augmentation.val_mean],
        ]
    }

    pub fn to_text(&self) -> String {
        let (on, off) = (&self.with_augmentation, &self.without_augmentation);
        format!(
            "phase       | augmentation on | augmentation off\n\
             training    | {:<15} | {}\n\
             validation  | {:<15} | {}\n",
            on.train_summary(),
            off.train_summary(),
            on.val_summary(),
            off.val_summary()
        )
    }
}

/// Runs both arms; validation inputs must hash identically fold by fold.
pub fn augmentation_study(
    patches: &[Patch],
    folds: &FoldAssignment,
    opts: &TrainOptions,
    augment: AugmentConfig,
) -> Result<(AugmentationStudy, CvOutcome, CvOutcome)> {
    let on = cross_validate(
        patches,
        folds,
        &TrainOptions {
            augment: Some(augment),
            ..*opts
        },
    )?;
    let off = cross_validate(
        patches,
        folds,
        &TrainOptions {
            augment: None,
            ..*opts
        },
    )?;
    for (a, b) in on.runs.iter().zip(&off.runs) {
        if a.val_digest != b.val_digest {
            return Err(invariant!("validation data differ between augmentation arms in fold {:?}", a.fold));
        }
    }
    let study = AugmentationStudy {
        with_augmentation: on.report.clone(),
        without_augmentation: off.report.clone(),
        augment,
    };
    Ok((study, on, off))
}
