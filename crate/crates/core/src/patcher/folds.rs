use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Result};
use crate::slide_store::{DatasetManifest, SlideLabel};

/// Slide-level partition into `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, slide_id: &str) -> Option<usize> {
        self.folds.get(slide_id).copied()
    }

    pub fn slides_in(&self, fold: usize) -> BTreeSet<&str> {
        self.folds
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Fold sizes, indexed by fold.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Checks the assignment covers exactly the manifest's slides.
    pub fn validate_for(&self, manifest: &DatasetManifest) -> Result<()> {
        let ids: BTreeSet<String> = manifest.entries.iter().map(|e| e.slide_id()).collect();
        let assigned: BTreeSet<String> = self.folds.keys().cloned().collect();
        if ids != assigned {
            return Err(invariant!("fold assignment does not cover the manifest's slides"));
        }
        if let Some((id, f)) = self.folds.iter().find(|(_, &f)| f >= self.k) {
            return Err(invariant!("slide {id} assigned to fold {f} of {}", self.k));
        }
        Ok(())
    }
}

/// Stratified round-robin: slides of each label are shuffled, then dealt to
/// folds with a single running counter, so fold sizes differ by at most one
/// and each label is spread as evenly as its count allows.
pub fn assign_folds(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(invariant!("need at least 2 folds, got {k}"));
    }
    let n = manifest.entries.len();
    if k > n {
        return Err(invariant!("{k} folds requested for only {n} slides"));
    }
    manifest.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = BTreeMap::new();
    let mut next = 0usize;
    for label in [SlideLabel::Tumor, SlideLabel::Normal] {
        let mut ids: Vec<String> = manifest
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.slide_id())
            .collect();
        ids.shuffle(&mut rng);
        for id in ids {
            folds.insert(id, next % k);
            next += 1;
        }
    }
    Ok(FoldAssignment { k, folds })
}
