use crate::geometry::{smoothed_l1, smoothed_l1_grad};
use crate::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `(-ln p[label], dL/dlogits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::dim("cross-entropy label", logits.len(), label));
    }
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[label];
    let mut grad = probs;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Sum of smoothed-L1 over components of `pred - target`, with its gradient
/// w.r.t. `pred`.
pub fn smoothed_l1_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::dim("smoothed-L1 target", pred.len(), target.len()));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        loss += smoothed_l1(d);
        grad.push(smoothed_l1_grad(d));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0; 5]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn cross_entropy_survives_large_logits() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0, -1000.0], 0).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_cross_entropy(&[1000.0, 0.0], 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
        assert!(softmax_cross_entropy(&[0.0], 1).is_err());
    }

    #[test]
    fn smoothed_l1_loss_sums_components() {
        let (l, g) = smoothed_l1_loss(&[0.5, 3.0], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 0.125 + 1.5);
        assert_eq!(g, vec![0.5, 1.0]);
    }
}
