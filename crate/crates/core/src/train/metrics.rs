//! Diagnostic metrics: accuracy, ROC curves, AUC and bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Result};

/// Fraction of predictions equal to their label.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(invariant!("{} predictions for {} labels", preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(invariant!("accuracy of an empty set"));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// One operating point. `threshold` is `None` for the point above every
/// score, where nothing is called positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Thresholds descend; a sample is positive when `score >= threshold`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn check_scores(scores: &[f64], positives: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != positives.len() {
        return Err(invariant!("{} scores for {} labels", scores.len(), positives.len()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(invariant!("score {s} is not finite"));
    }
    let pos = positives.iter().filter(|&&p| p).count();
    let neg = positives.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invariant!("ROC analysis needs both classes ({pos} positive, {neg} negative)"));
    }
    Ok((pos, neg))
}

/// Sweeps every distinct score as a threshold. Equal scores form a single
/// step, so ties contribute a diagonal segment to the area.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_scores(scores, positives)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc2 = 0u128;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Twice the trapezoid in count units keeps the area exact.
        auc2 += ((fp - fp0) * (tp + tp0)) as u128;
        points.push(RocPoint {
            threshold: Some(s),
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = auc2 as f64 / (2 * pos * neg) as f64;
    Ok(RocCurve {
        points,
        auc,
        ci_low: auc,
        ci_high: auc,
    })
}

pub fn auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    Ok(roc_curve(scores, positives)?.auc)
}

/// Linear interpolation between order statistics of sorted `v`.
fn quantile(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Stratified percentile bootstrap: each resample draws positives and
/// negatives separately with replacement, keeping class sizes fixed.
pub fn auc_ci(
    scores: &[f64],
    positives: &[bool],
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let (pos, neg) = check_scores(scores, positives)?;
    if pos < 2 || neg < 2 {
        return Err(invariant!("bootstrap needs at least 2 samples per class"));
    }
    if n_boot == 0 || !(level > 0.0 && level < 1.0) {
        return Err(invariant!("need n_boot >= 1 and level in (0, 1)"));
    }
    let p: Vec<f64> = scores.iter().zip(positives).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let n: Vec<f64> = scores.iter().zip(positives).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut aucs = Vec::with_capacity(n_boot);
    let mut s = Vec::with_capacity(scores.len());
    let mut l = Vec::with_capacity(scores.len());
    for _ in 0..n_boot {
        s.clear();
        l.clear();
        for _ in 0..pos {
            s.push(p[rng.random_range(0..pos)]);
            l.push(true);
        }
        for _ in 0..neg {
            s.push(n[rng.random_range(0..neg)]);
            l.push(false);
        }
        aucs.push(auc(&s, &l)?);
    }
    aucs.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&aucs, alpha), quantile(&aucs, 1.0 - alpha)))
}

impl RocCurve {
    /// Attaches a bootstrap interval, widened if needed so it always brackets
    /// the point estimate.
    pub fn with_ci(
        mut self,
        scores: &[f64],
        positives: &[bool],
        n_boot: usize,
        level: f64,
        seed: u64,
    ) -> Result<Self> {
        let (lo, hi) = auc_ci(scores, positives, n_boot, level, seed)?;
        self.ci_low = lo.min(self.auc);
        self.ci_high = hi.max(self.auc);
        Ok(self)
    }

    /// `threshold,fpr,tpr` rows; the open threshold is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            match p.threshold {
                Some(t) => out.push_str(&format!("{t},{},{}\n", p.fpr, p.tpr)),
                None => out.push_str(&format!("inf,{},{}\n", p.fpr, p.tpr)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let labels = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0];
        let mut preds = labels;
        assert_eq!(accuracy(&preds, &labels).unwrap(), 1.0);
        preds[3] = 0;
        assert_eq!(accuracy(&preds, &labels).unwrap(), 0.9);
        let wrong: Vec<usize> = labels.iter().map(|l| 1 - l).collect();
        assert_eq!(accuracy(&wrong, &labels).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn separated_and_constant_scores() {
        let labels = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 0.0);
        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn separated_ci_is_degenerate() {
        let scores: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert_eq!(auc_ci(&scores, &labels, 1000, 0.95, 3).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn csv_layout() {
        let c = roc_curve(&[0.7, 0.2], &[true, false]).unwrap();
        assert_eq!(c.to_csv(), "threshold,fpr,tpr\ninf,0,0\n0.7,0,1\n0.2,1,1\n");
    }
}
