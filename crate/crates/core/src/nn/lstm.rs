use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, join_name, sigmoid, Matrix, Parameters};
use crate::Result;

/// Single-layer LSTM cell. Gate pre-activations are laid out as
/// `[input | forget | output | candidate]`, each `hidden` wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().chain(&self.h).all(|v| v.is_finite())
    }
}

/// What one forward step keeps for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Vec<f64>,
    prev: LstmState,
    /// Activated gates, same layout as the pre-activations.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_input: Matrix::zeros(input_dim, 4 * hidden),
            w_hidden: Matrix::zeros(hidden, 4 * hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn gaussian<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            w_input: Matrix::gaussian(input_dim, 4 * hidden, std, rng),
            w_hidden: Matrix::gaussian(hidden, 4 * hidden, std, rng),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.rows()
    }

    pub fn step(&self, state: &LstmState, input: &[f64]) -> Result<LstmState> {
        self.step_cached(state, input).map(|(s, _)| s)
    }

    pub fn step_cached(&self, state: &LstmState, input: &[f64]) -> Result<(LstmState, LstmCache)> {
        let hd = self.hidden();
        check_len("LSTM input", self.input_dim(), input.len())?;
        check_len("LSTM hidden state", hd, state.h.len())?;
        check_len("LSTM cell state", hd, state.c.len())?;

        let mut z = self.bias.as_slice().to_vec();
        self.w_input.accumulate_xt_m(input, &mut z);
        self.w_hidden.accumulate_xt_m(&state.h, &mut z);

        let mut gates = z;
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if k < 3 * hd { sigmoid(*g) } else { g.tanh() };
        }
        let (i, rest) = gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (o, g) = rest.split_at(hd);

        let mut c = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for k in 0..hd {
            c[k] = f[k] * state.c[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        let next = LstmState { c: c.clone(), h };
        let cache = LstmCache {
            input: input.to_vec(),
            prev: state.clone(),
            gates,
            c,
            tanh_c,
        };
        Ok((next, cache))
    }

    /// Backpropagates one step. `d_h` and `d_c` are gradients w.r.t. this
    /// step's outputs; returns `(d_input, d_prev_state)`.
    pub fn backward_step(
        &self,
        cache: &LstmCache,
        d_h: &[f64],
        d_c: &[f64],
        grads: &mut LstmCell,
    ) -> (Vec<f64>, LstmState) {
        let hd = self.hidden();
        let (i, rest) = cache.gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (o, g) = rest.split_at(hd);

        let mut dz = vec![0.0; 4 * hd];
        let mut d_c_prev = vec![0.0; hd];
        for k in 0..hd {
            let d_o = d_h[k] * cache.tanh_c[k];
            let dc = d_c[k] + d_h[k] * o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let d_i = dc * g[k];
            let d_g = dc * i[k];
            let d_f = dc * cache.prev.c[k];
            d_c_prev[k] = dc * f[k];
            dz[k] = d_i * i[k] * (1.0 - i[k]);
            dz[hd + k] = d_f * f[k] * (1.0 - f[k]);
            dz[2 * hd + k] = d_o * o[k] * (1.0 - o[k]);
            dz[3 * hd + k] = d_g * (1.0 - g[k] * g[k]);
        }
        debug_assert_eq!(cache.c.len(), hd);

        grads.w_input.add_outer(&cache.input, &dz);
        grads.w_hidden.add_outer(&cache.prev.h, &dz);
        for (b, d) in grads.bias.as_mut_slice().iter_mut().zip(&dz) {
            *b += d;
        }

        let mut d_input = vec![0.0; self.input_dim()];
        self.w_input.accumulate_m_v(&dz, &mut d_input);
        let mut d_h_prev = vec![0.0; hd];
        self.w_hidden.accumulate_m_v(&dz, &mut d_h_prev);
        (
            d_input,
            LstmState {
                c: d_c_prev,
                h: d_h_prev,
            },
        )
    }
}

impl Parameters for LstmCell {
    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        f(&join_name(prefix, "w_input"), &self.w_input);
        f(&join_name(prefix, "w_hidden"), &self.w_hidden);
        f(&join_name(prefix, "bias"), &self.bias);
    }

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f(&join_name(prefix, "w_input"), &mut self.w_input);
        f(&join_name(prefix, "w_hidden"), &mut self.w_hidden);
        f(&join_name(prefix, "bias"), &mut self.bias);
    }
}
