use rand::Rng;

use crate::classifier::{ClassifierMode, TemporalClassifier, TubeletSample};
use crate::nn::{
    grad_check, smoothed_l1_loss, softmax_cross_entropy, DenseLayer, GradCheckReport, LstmCell,
    LstmState, Matrix, Parameters,
};
use crate::synth::rng_for;
use crate::Result;

pub const GRAD_CHECK_EPSILON: f64 = 1e-4;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Central-difference checks of every differentiable piece: a dense layer
/// under cross-entropy, both losses with respect to their inputs, an LSTM
/// unrolled over six steps, and the three classifier stacks with a box
/// head.
pub fn gradient_check_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = rng_for(seed, 0x6C);
    let eps = GRAD_CHECK_EPSILON;
    let mut out = Vec::new();

    let dense = DenseLayer::gaussian(5, 4, 0.5, &mut rng);
    let x = uniform(&mut rng, 5);
    out.push((
        "dense+cross_entropy".to_string(),
        grad_check(&dense, eps, |layer| {
            let (loss, d) = softmax_cross_entropy(&layer.forward(&x)?, 2)?;
            let mut g = layer.zeros_like();
            layer.backward(&x, &d, &mut g);
            Ok((loss, g))
        })?,
    ));

    // residuals on both sides of the kink, none within 0.1 of it
    let target = uniform(&mut rng, 8);
    let offsets = [0.3, -0.6, 1.5, -2.0, 0.05, 0.8, -1.2, 2.5];
    let pred = Matrix::from_vec(
        1,
        8,
        target.iter().zip(offsets).map(|(t, o)| t + o).collect(),
    )?;
    out.push((
        "smoothed_l1".to_string(),
        grad_check(&pred, eps, |p| {
            let (loss, d) = smoothed_l1_loss(p.as_slice(), &target)?;
            Ok((loss, Matrix::from_vec(1, d.len(), d)?))
        })?,
    ));

    let logits = Matrix::from_vec(1, 5, uniform(&mut rng, 5))?;
    out.push((
        "cross_entropy".to_string(),
        grad_check(&logits, eps, |z| {
            let (loss, d) = softmax_cross_entropy(z.as_slice(), 3)?;
            Ok((loss, Matrix::from_vec(1, d.len(), d)?))
        })?,
    ));

    let cell = LstmCell::gaussian(3, 4, 0.5, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..6).map(|_| uniform(&mut rng, 3)).collect();
    let weights: Vec<Vec<f64>> = (0..6).map(|_| uniform(&mut rng, 4)).collect();
    out.push((
        "lstm_unrolled_6".to_string(),
        grad_check(&cell, eps, |c| {
            let mut state = LstmState::zeros(4);
            let mut caches = Vec::new();
            let mut loss = 0.0;
            for (u, w) in inputs.iter().zip(&weights) {
                let (next, cache) = c.step_cached(&state, u)?;
                loss += next.h.iter().zip(w).map(|(h, w)| h * w).sum::<f64>();
                caches.push(cache);
                state = next;
            }
            let mut g = c.zeros_like();
            let mut d = LstmState::zeros(4);
            for t in (0..6).rev() {
                let d_h: Vec<f64> = weights[t].iter().zip(&d.h).map(|(a, b)| a + b).collect();
                d = c.backward_step(&caches[t], &d_h, &d.c, &mut g).1;
            }
            Ok((loss, g))
        })?,
    ));

    let sample = TubeletSample {
        features: (0..6).map(|_| uniform(&mut rng, 3)).collect(),
        labels: (0..6).map(|_| rng.random_range(0..3)).collect(),
        box_targets: (0..6)
            .map(|t| (t % 2 == 0).then(|| [0.2, -0.3, 0.1, 0.4]))
            .collect(),
    };
    for mode in ClassifierMode::ALL {
        let model = TemporalClassifier::new(mode, 3, 4, 3, true, 0.5, &mut rng)?;
        out.push((
            format!("{mode}_stack_l6"),
            grad_check(&model, eps, |m| m.loss_and_grad(&sample, 0.5))?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for (name, report) in gradient_check_suite(1).unwrap() {
            assert!(
                report.max_relative_error < GRAD_CHECK_TOLERANCE,
                "{name}: {report:?}"
            );
        }
    }
}
