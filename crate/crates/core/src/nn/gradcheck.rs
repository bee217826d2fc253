use super::Parameters;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares analytic gradients against central differences over every
/// parameter. The per-entry error is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<P, F>(params: &P, epsilon: f64, loss_and_grad: F) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<(f64, P)>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::Config(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let (loss, grads) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at base point".into()));
    }
    let analytic = grads.to_flat();
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        checked: base.len(),
    };
    for k in 0..base.len() {
        flat[k] = base[k] + epsilon;
        probe.load_flat(&flat)?;
        let plus = loss_and_grad(&probe)?.0;
        flat[k] = base[k] - epsilon;
        probe.load_flat(&flat)?;
        let minus = loss_and_grad(&probe)?.0;
        flat[k] = base[k];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss while perturbing parameter {k}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = k;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{
        smoothed_l1_loss, softmax_cross_entropy, DenseLayer, LstmCell, LstmState, Matrix,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_with_known_gradient() {
        // L = 0.5 * sum(3 p^2), dL/dp = 3p
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DenseLayer::gaussian(3, 2, 1.0, &mut rng);
        let report = grad_check(&p, 1e-4, |q: &DenseLayer| {
            let flat = q.to_flat();
            let loss = flat.iter().map(|v| 1.5 * v * v).sum();
            let mut g = q.clone();
            g.load_flat(&flat.iter().map(|v| 3.0 * v).collect::<Vec<_>>())?;
            Ok((loss, g))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-7, "{report:?}");
    }

    #[test]
    fn dense_with_smoothed_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = DenseLayer::gaussian(5, 3, 0.8, &mut rng);
        layer.bias = Matrix::gaussian(1, 3, 0.5, &mut rng);
        let x = [0.3, -1.2, 0.8, 2.0, -0.4];
        let target = [0.1, 1.7, -2.5];
        let report = grad_check(&layer, 1e-4, |l: &DenseLayer| {
            let y = l.forward(&x)?;
            let (loss, d) = smoothed_l1_loss(&y, &target)?;
            let mut g = l.zeros_like();
            l.backward(&x, &d, &mut g);
            Ok((loss, g))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn lstm_unrolled_with_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = LstmCell::gaussian(3, 4, 0.5, &mut rng);
        let head = DenseLayer::gaussian(4, 3, 0.5, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|t| (0..3).map(|k| ((t * 3 + k) as f64 * 0.7).sin()).collect())
            .collect();
        let label = 2;

        let report = grad_check(&cell, 1e-4, |c: &LstmCell| {
            let mut state = LstmState::zeros(4);
            let mut caches = Vec::new();
            for x in &xs {
                let (s, cache) = c.step_cached(&state, x)?;
                caches.push(cache);
                state = s;
            }
            let logits = head.forward(&state.h)?;
            let (loss, d_logits) = softmax_cross_entropy(&logits, label)?;
            let mut head_g = head.zeros_like();
            let mut d_h = head.backward(&state.h, &d_logits, &mut head_g);
            let mut d_c = vec![0.0; 4];
            let mut g = c.zeros_like();
            for cache in caches.iter().rev() {
                let (_, d_prev) = c.backward_step(cache, &d_h, &d_c, &mut g);
                d_h = d_prev.h;
                d_c = d_prev.c;
            }
            Ok((loss, g))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn rejects_bad_epsilon_and_non_finite_loss() {
        let p = DenseLayer::zeros(1, 1);
        let f = |q: &DenseLayer| Ok((0.0, q.clone()));
        assert!(grad_check(&p, 1e-2, f).is_err());
        let bad = |q: &DenseLayer| Ok((f64::NAN, q.clone()));
        assert!(matches!(
            grad_check(&p, 1e-4, bad),
            Err(Error::NonFinite(_))
        ));
    }
}
