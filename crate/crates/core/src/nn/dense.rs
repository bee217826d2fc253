use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, join_name, Matrix, Parameters};
use crate::Result;

/// Affine layer `y = x W + b` with `W` of shape `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    /// Gaussian weights with standard deviation `std`, zero bias.
    pub fn gaussian<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, std: f64, rng: &mut R) -> Self {
        Self {
            weights: Matrix::gaussian(in_dim, out_dim, std, rng),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        check_len("DenseLayer bias", weights.cols(), bias.len())?;
        let n = bias.len();
        Ok(Self {
            weights,
            bias: Matrix::from_vec(1, n, bias)?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("DenseLayer input", self.in_dim(), input.len())?;
        let mut out = self.bias.as_slice().to_vec();
        self.weights.accumulate_xt_m(input, &mut out);
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dinput`.
    pub fn backward(&self, input: &[f64], d_out: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
        grads.weights.add_outer(input, d_out);
        for (g, d) in grads.bias.as_mut_slice().iter_mut().zip(d_out) {
            *g += d;
        }
        let mut d_in = vec![0.0; self.in_dim()];
        self.weights.accumulate_m_v(d_out, &mut d_in);
        d_in
    }
}

impl Parameters for DenseLayer {
    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        f(&join_name(prefix, "weights"), &self.weights);
        f(&join_name(prefix, "bias"), &self.bias);
    }

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f(&join_name(prefix, "weights"), &mut self.weights);
        f(&join_name(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_bias() {
        let layer = DenseLayer::from_parts(Matrix::zeros(3, 2), vec![0.5, -1.5]).unwrap();
        assert_eq!(layer.forward(&[9.0, -2.0, 4.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_weights_copy_input() {
        let layer = DenseLayer::from_parts(Matrix::identity(4), vec![0.0; 4]).unwrap();
        let x = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(layer.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn random_layer_matches_hand_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = DenseLayer::gaussian(3, 2, 1.0, &mut rng);
        layer.bias = Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap();
        let x = [0.2, -1.1, 2.4];
        let w = &layer.weights;
        let expect = [
            x[0] * w.get(0, 0) + x[1] * w.get(1, 0) + x[2] * w.get(2, 0) + 0.3,
            x[0] * w.get(0, 1) + x[1] * w.get(1, 1) + x[2] * w.get(2, 1) - 0.7,
        ];
        let got = layer.forward(&x).unwrap();
        for k in 0..2 {
            assert!((got[k] - expect[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(layer.forward(&[1.0, 2.0]).is_err());
        assert!(DenseLayer::from_parts(Matrix::zeros(3, 2), vec![0.0; 3]).is_err());
    }
}
