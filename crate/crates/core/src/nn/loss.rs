use super::{Scalar, Tensor};
use crate::error::{invariant, Error, Result};

/// Cross-entropy of one logit vector against `label`, with the unscaled
/// gradient `softmax − onehot`. Uses log-sum-exp so large logits are safe.
pub(crate) fn sample_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(invariant!("label {label} out of range for {} classes", logits.len()));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    let log_z = max + sum.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<T> = logits.iter().map(|&v| (v - log_z).exp()).collect();
    grad[label] -= T::one();
    if !loss.is_finite() {
        return Err(Error::Numeric("cross-entropy is not finite".to_owned()));
    }
    Ok((loss, grad))
}

/// Mean cross-entropy over `[N, C]` logits and its gradient
/// `(softmax − onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    if logits.shape().len() != 2 {
        return Err(invariant!("logits must be [N, C], got {:?}", logits.shape()));
    }
    let n = logits.batch();
    if labels.len() != n {
        return Err(invariant!("{} labels for {n} rows", labels.len()));
    }
    let scale = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (i, &label) in labels.iter().enumerate() {
        let (loss, g) = sample_cross_entropy(logits.sample(i), label)?;
        total += loss;
        grad.extend(g.into_iter().map(|v| v * scale));
    }
    Ok((total * scale, Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln2() {
        let logits = Tensor::<f64>::new(vec![2, 2], vec![0.0; 4]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(grad.data(), &[-0.25, 0.25, 0.25, -0.25]);
    }

    #[test]
    fn extreme_logits_are_stable() {
        let logits = Tensor::<f32>::new(vec![1, 2], vec![30.0, -30.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.abs() < 1e-6);
        assert!(grad.is_finite());
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((loss - 60.0).abs() < 1e-4);
    }

    #[test]
    fn bad_label() {
        let logits = Tensor::<f32>::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[2]).is_err());
    }
}
