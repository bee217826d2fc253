use super::Parameters;
use crate::{Error, Result};

/// Classical (heavy-ball) momentum: `v <- mu v - lr g; p <- p + v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Optional global-norm gradient clip.
    pub clip_norm: Option<f64>,
    velocity: Vec<f64>,
    shapes: Vec<(String, usize, usize)>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            learning_rate,
            momentum,
            clip_norm: None,
            velocity: Vec::new(),
            shapes: Vec::new(),
        })
    }

    pub fn with_clip_norm(mut self, clip: Option<f64>) -> Self {
        self.clip_norm = clip;
        self
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// Applies one update. A non-finite gradient aborts the step and leaves
    /// both parameters and velocity untouched.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let shapes = params.shapes();
        if shapes != grads.shapes() {
            return Err(Error::Invalid(
                "gradient layout does not match parameters".into(),
            ));
        }
        if self.shapes.is_empty() {
            self.velocity = vec![0.0; params.num_params()];
            self.shapes = shapes;
        } else if self.shapes != shapes {
            return Err(Error::Invalid(
                "optimizer velocity layout does not match parameters".into(),
            ));
        }

        let mut g = grads.to_flat();
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {pos}")));
        }
        if let Some(clip) = self.clip_norm {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                g.iter_mut().for_each(|v| *v *= s);
            }
        }

        let mut p = params.to_flat();
        for ((pv, vv), gv) in p.iter_mut().zip(self.velocity.iter_mut()).zip(&g) {
            *vv = self.momentum * *vv - self.learning_rate * gv;
            *pv += *vv;
        }
        params.load_flat(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseLayer, Matrix};

    fn layer(v: f64) -> DenseLayer {
        DenseLayer::from_parts(Matrix::from_vec(1, 1, vec![v]).unwrap(), vec![0.0]).unwrap()
    }

    #[test]
    fn plain_sgd_moves_by_lr_times_grad() {
        let mut opt = SgdMomentum::new(0.1, 0.0).unwrap();
        let mut p = layer(1.0);
        opt.step(&mut p, &layer(2.0)).unwrap();
        assert!((p.weights.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut opt = SgdMomentum::new(0.5, 0.9).unwrap();
        let mut p = layer(3.0);
        for _ in 0..100 {
            opt.step(&mut p, &layer(0.0)).unwrap();
        }
        assert_eq!(p.weights.get(0, 0), 3.0);
    }

    #[test]
    fn two_momentum_steps_on_constant_gradient() {
        let (lr, g) = (0.01, 1.5);
        let mut opt = SgdMomentum::new(lr, 0.9).unwrap();
        let mut p = layer(0.0);
        opt.step(&mut p, &layer(g)).unwrap();
        opt.step(&mut p, &layer(g)).unwrap();
        // v1 = -lr g, v2 = -0.9 lr g - lr g; displacement = lr g (1 + 1.9)
        let expect = -lr * g * (1.0 + 1.9);
        assert!((p.weights.get(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let mut opt = SgdMomentum::new(0.1, 0.9).unwrap();
        let mut p = layer(1.0);
        assert!(opt.step(&mut p, &layer(f64::NAN)).is_err());
        assert_eq!(p.weights.get(0, 0), 1.0);
        assert!(opt.velocity().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = SgdMomentum::new(0.1, 0.9).unwrap();
        let mut p = layer(1.0);
        assert!(opt.step(&mut p, &DenseLayer::zeros(2, 1)).is_err());
    }

    #[test]
    fn clip_limits_global_norm() {
        let mut opt = SgdMomentum::new(1.0, 0.0)
            .unwrap()
            .with_clip_norm(Some(1.0));
        let mut p = layer(0.0);
        opt.step(&mut p, &layer(10.0)).unwrap();
        assert!((p.weights.get(0, 0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(SgdMomentum::new(0.0, 0.9).is_err());
        assert!(SgdMomentum::new(0.1, 1.0).is_err());
    }
}
