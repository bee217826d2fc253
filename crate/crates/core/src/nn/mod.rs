//! Small deterministic layer kit: everything is `f64`, row-major, and
//! differentiated by hand.
//!
//! Parameter containers implement [`Parameters`]; a container of the same type
//! doubles as its gradient accumulator, which keeps optimizer updates,
//! gradient checks and checkpoints shape-agnostic.

mod checkpoint;
mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod optim;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dense::DenseLayer;
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{smoothed_l1_loss, softmax, softmax_cross_entropy};
pub use lstm::{LstmCache, LstmCell, LstmState};
pub use optim::SgdMomentum;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix. Vectors are `1 x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::Error::dim(
                "Matrix::from_vec",
                rows * cols,
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("std is positive and finite");
            for v in &mut m.data {
                *v = normal.sample(rng);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `y[j] = sum_i x[i] * self[i][j]`, accumulated into `out`.
    pub fn accumulate_xt_m(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// `y[i] = sum_j self[i][j] * v[j]`, accumulated into `out`.
    pub fn accumulate_m_v(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (&w, &vj) in row.iter().zip(v) {
                acc += w * vj;
            }
            *o += acc;
        }
    }

    /// `self += x ⊗ d`.
    pub fn add_outer(&mut self, x: &[f64], d: &[f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(d.len(), self.cols);
        let cols = self.cols;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * cols..(i + 1) * cols];
            for (r, &dj) in row.iter_mut().zip(d) {
                *r += xi * dj;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// A named collection of parameter tensors visited in a fixed order.
pub trait Parameters {
    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix));

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_param("", &mut |_, m| n += m.as_slice().len());
        n
    }

    fn shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        self.for_each_param("", &mut |name, m| {
            out.push((name.to_string(), m.rows(), m.cols()))
        });
        out
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_param("", &mut |_, m| out.extend_from_slice(m.as_slice()));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> crate::Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(crate::Error::dim("Parameters::load_flat", n, flat.len()));
        }
        let mut offset = 0;
        self.for_each_param_mut("", &mut |_, m| {
            let len = m.as_slice().len();
            m.as_mut_slice()
                .copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        });
        Ok(())
    }

    fn zero(&mut self) {
        self.for_each_param_mut("", &mut |_, m| m.fill(0.0));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_param("", &mut |_, m| {
            ok &= m.as_slice().iter().all(|v| v.is_finite())
        });
        ok
    }

    /// Adds another container of the same layout, elementwise.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.to_flat();
        let mut offset = 0;
        self.for_each_param_mut("", &mut |_, m| {
            for v in m.as_mut_slice() {
                *v += flat[offset];
                offset += 1;
            }
        });
    }

    fn scale(&mut self, s: f64) {
        self.for_each_param_mut("", &mut |_, m| {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= s)
        });
    }

    /// A zeroed copy, used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.zero();
        z
    }
}

/// A bare tensor is a container of one parameter named by the prefix.
impl Parameters for Matrix {
    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        f(prefix, self);
    }

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f(prefix, self);
    }
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn check_len(
    context: &'static str,
    expected: usize,
    actual: usize,
) -> crate::Result<()> {
    if expected != actual {
        return Err(crate::Error::dim(context, expected, actual));
    }
    Ok(())
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
