//! Tubelet proposal network: a single affine layer that maps the features
//! pooled at one spatial anchor over `w` frames to the anchor's movement on
//! frames `2..=w`.

mod samples;
mod train;

pub use samples::{
    build_corpus, build_sample, build_targets, ideal_tubelet, match_anchors, CorpusConfig,
    TrainingSample,
};
pub use train::{corpus_loss, train_tpn, InitMode, TpnTrainConfig, TrainLog, TrainedTpn};

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{DeltaKind, MovementDelta};
use crate::nn::{Checkpoint, DenseLayer, Matrix, Parameters};
use crate::{Error, Result};

/// Lower bound on per-component target standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Multi-frame regression layer. Input is the concatenation of `window`
/// feature vectors of length `feature_dim`; output is `4 * (window - 1)`
/// normalized movement values, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionLayer {
    window: usize,
    feature_dim: usize,
    pub dense: DenseLayer,
}

impl RegressionLayer {
    pub fn zeros(feature_dim: usize, window: usize) -> Result<Self> {
        Self::check_window(window)?;
        Ok(Self {
            window,
            feature_dim,
            dense: DenseLayer::zeros(feature_dim * window, 4 * (window - 1)),
        })
    }

    pub fn gaussian<R: Rng + ?Sized>(
        feature_dim: usize,
        window: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_window(window)?;
        Ok(Self {
            window,
            feature_dim,
            dense: DenseLayer::gaussian(feature_dim * window, 4 * (window - 1), std, rng),
        })
    }

    pub fn from_dense(feature_dim: usize, window: usize, dense: DenseLayer) -> Result<Self> {
        Self::check_window(window)?;
        if dense.in_dim() != feature_dim * window {
            return Err(Error::dim(
                "regression layer inputs",
                feature_dim * window,
                dense.in_dim(),
            ));
        }
        if dense.out_dim() != 4 * (window - 1) {
            return Err(Error::dim(
                "regression layer outputs",
                4 * (window - 1),
                dense.out_dim(),
            ));
        }
        Ok(Self {
            window,
            feature_dim,
            dense,
        })
    }

    fn check_window(window: usize) -> Result<()> {
        if window < 2 {
            return Err(Error::Config(format!(
                "temporal window must be >= 2, got {window}"
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn concat(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        if features.len() != self.window {
            return Err(Error::dim("feature frames", self.window, features.len()));
        }
        let mut x = Vec::with_capacity(self.window * self.feature_dim);
        for f in features {
            if f.len() != self.feature_dim {
                return Err(Error::dim("feature length", self.feature_dim, f.len()));
            }
            x.extend_from_slice(f);
        }
        Ok(x)
    }

    /// Normalized outputs for frames `2..=w`.
    pub fn forward(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.dense.forward(&self.concat(features)?)
    }

    /// Initializes a `window`-frame layer from a trained 2-frame layer.
    ///
    /// The 2-frame weights split into `A` (rows for frame-1 features) and `B`
    /// (rows for frame-2 features). The output block for frame `t` gets `A`
    /// in the frame-1 rows and `B` in the frame-`t` rows; everything else is
    /// zero, and the bias is the 2-frame bias repeated.
    pub fn block_init(two_frame: &RegressionLayer, window: usize) -> Result<RegressionLayer> {
        if two_frame.window != 2 {
            return Err(Error::dim("block init source window", 2, two_frame.window));
        }
        let f = two_frame.feature_dim;
        let mut out = RegressionLayer::zeros(f, window)?;
        let src = &two_frame.dense;
        let dst = &mut out.dense;
        for t in 1..window {
            for r in 0..f {
                for c in 0..4 {
                    dst.weights.set(r, 4 * (t - 1) + c, src.weights.get(r, c));
                    dst.weights
                        .set(t * f + r, 4 * (t - 1) + c, src.weights.get(f + r, c));
                }
            }
            for c in 0..4 {
                dst.bias.set(0, 4 * (t - 1) + c, src.bias.get(0, c));
            }
        }
        Ok(out)
    }

    /// Block init that also checks the source feature width.
    pub fn block_init_checked(
        two_frame: &RegressionLayer,
        feature_dim: usize,
        window: usize,
    ) -> Result<RegressionLayer> {
        if two_frame.feature_dim != feature_dim {
            return Err(Error::dim(
                "block init feature_dim",
                feature_dim,
                two_frame.feature_dim,
            ));
        }
        Self::block_init(two_frame, window)
    }
}

/// Block init expressed in the target units of the new window.
///
/// [`RegressionLayer::block_init`] copies weights trained against the
/// 2-frame statistics, while the output block for frame `t` of the new layer
/// is read with the statistics of offset `t`. Rescaling each output column
/// by `std_2 / std_t` and shifting its bias makes the de-normalized
/// prediction for frame `t` equal the 2-frame model's prediction on
/// `(r_1, r_t)`.
pub fn block_init_model(
    two_frame: &TpnModel,
    stats: &NormalizationStats,
) -> Result<RegressionLayer> {
    let window = stats.len() + 1;
    if two_frame.stats.len() != 1 {
        return Err(Error::dim(
            "block init source statistics",
            1,
            two_frame.stats.len(),
        ));
    }
    let mut layer = RegressionLayer::block_init(&two_frame.layer, window)?;
    let (m2, s2) = (two_frame.stats.mean[0], two_frame.stats.std[0]);
    let rows = layer.dense.weights.rows();
    for t in 0..window - 1 {
        for c in 0..4 {
            let col = 4 * t + c;
            let scale = s2[c] / stats.std[t][c];
            for r in 0..rows {
                let v = layer.dense.weights.get(r, col);
                layer.dense.weights.set(r, col, v * scale);
            }
            let b = layer.dense.bias.get(0, col);
            layer.dense.bias.set(
                0,
                col,
                (b * s2[c] + m2[c] - stats.mean[t][c]) / stats.std[t][c],
            );
        }
    }
    Ok(layer)
}

impl Parameters for RegressionLayer {
    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        self.dense.for_each_param(prefix, f)
    }

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        self.dense.for_each_param_mut(prefix, f)
    }
}

/// Per-frame-offset, per-component mean and standard deviation of the
/// movement targets. Index `k` covers frame `k + 2` of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<[f64; 4]>,
    pub std: Vec<[f64; 4]>,
}

impl NormalizationStats {
    /// Identity transform for `window` frames.
    pub fn identity(window: usize) -> Self {
        Self {
            mean: vec![[0.0; 4]; window - 1],
            std: vec![[1.0; 4]; window - 1],
        }
    }

    /// Population moments over a corpus of target sequences.
    pub fn from_targets<'a, I>(targets: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [MovementDelta]>,
    {
        let seqs: Vec<&[MovementDelta]> = targets.into_iter().collect();
        let first = seqs
            .first()
            .ok_or_else(|| Error::Invalid("cannot compute statistics of an empty corpus".into()))?;
        let len = first.len();
        if let Some(bad) = seqs.iter().find(|s| s.len() != len) {
            return Err(Error::dim("target sequence length", len, bad.len()));
        }
        let n = seqs.len() as f64;
        let mut mean = vec![[0.0; 4]; len];
        for s in &seqs {
            for (m, d) in mean.iter_mut().zip(s.iter()) {
                for (mk, v) in m.iter_mut().zip(d.to_array()) {
                    *mk += v;
                }
            }
        }
        mean.iter_mut().flatten().for_each(|m| *m /= n);
        let mut var = vec![[0.0; 4]; len];
        for s in &seqs {
            for ((acc, m), d) in var.iter_mut().zip(&mean).zip(s.iter()) {
                for ((a, mk), v) in acc.iter_mut().zip(m).zip(d.to_array()) {
                    *a += (v - mk) * (v - mk);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| v.map(|x| (x / n).sqrt().max(STD_FLOOR)))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn normalize(&self, targets: &[MovementDelta]) -> Result<Vec<MovementDelta>> {
        if targets.len() != self.len() {
            return Err(Error::dim(
                "targets to normalize",
                self.len(),
                targets.len(),
            ));
        }
        Ok(targets
            .iter()
            .enumerate()
            .map(|(t, d)| {
                let v = d.to_array();
                let out = std::array::from_fn(|k| (v[k] - self.mean[t][k]) / self.std[t][k]);
                MovementDelta::from_array(out, DeltaKind::Normalized)
            })
            .collect())
    }

    /// Maps normalized values back to raw movements: `v * std + mean`.
    pub fn de_normalize(&self, outputs: &[f64]) -> Result<Vec<MovementDelta>> {
        if outputs.len() != 4 * self.len() {
            return Err(Error::dim(
                "outputs to de-normalize",
                4 * self.len(),
                outputs.len(),
            ));
        }
        Ok(outputs
            .chunks_exact(4)
            .enumerate()
            .map(|(t, v)| {
                let out = std::array::from_fn(|k| v[k] * self.std[t][k] + self.mean[t][k]);
                MovementDelta::from_array(out, DeltaKind::Raw)
            })
            .collect())
    }

    fn to_matrices(&self) -> (Matrix, Matrix) {
        let flat = |v: &[[f64; 4]]| v.iter().flatten().copied().collect::<Vec<_>>();
        (
            Matrix::from_vec(self.len(), 4, flat(&self.mean)).expect("shape"),
            Matrix::from_vec(self.len(), 4, flat(&self.std)).expect("shape"),
        )
    }

    fn from_matrices(mean: &Matrix, std: &Matrix) -> Result<Self> {
        if mean.cols() != 4 || std.cols() != 4 || mean.rows() != std.rows() {
            return Err(Error::Invalid(
                "normalization tensors must be (w-1) x 4".into(),
            ));
        }
        let rows = |m: &Matrix| {
            (0..m.rows())
                .map(|r| std::array::from_fn(|k| m.get(r, k)))
                .collect()
        };
        let out = Self {
            mean: rows(mean),
            std: rows(std),
        };
        if out.std.iter().flatten().any(|&s| !(s > 0.0)) {
            return Err(Error::Invalid("normalization std must be positive".into()));
        }
        Ok(out)
    }
}

/// Regression outputs turned into raw per-frame movements for frames `2..=w`.
pub fn predict_movements(
    layer: &RegressionLayer,
    stats: &NormalizationStats,
    features: &[Vec<f64>],
) -> Result<Vec<MovementDelta>> {
    if stats.len() != layer.window() - 1 {
        return Err(Error::dim(
            "normalization stats frames",
            layer.window() - 1,
            stats.len(),
        ));
    }
    stats.de_normalize(&layer.forward(features)?)
}

/// A trained layer with the statistics it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct TpnModel {
    pub layer: RegressionLayer,
    pub stats: NormalizationStats,
}

impl TpnModel {
    pub fn window(&self) -> usize {
        self.layer.window()
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<MovementDelta>> {
        predict_movements(&self.layer, &self.stats, features)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("model", "tpn");
        ck.set_meta("window", self.layer.window());
        ck.set_meta("feature_dim", self.layer.feature_dim());
        ck.add_params("regression", &self.layer);
        let (mean, std) = self.stats.to_matrices();
        ck.add_tensor("norm.mean", &mean);
        ck.add_tensor("norm.std", &std);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model")? != "tpn" {
            return Err(Error::Invalid("checkpoint does not hold a TPN".into()));
        }
        let window: usize = ck.meta_parse("window")?;
        let feature_dim: usize = ck.meta_parse("feature_dim")?;
        let mut layer = RegressionLayer::zeros(feature_dim, window)?;
        ck.load_params("regression", &mut layer)?;
        let stats =
            NormalizationStats::from_matrices(&ck.tensor("norm.mean")?, &ck.tensor("norm.std")?)?;
        if stats.len() != window - 1 {
            return Err(Error::dim(
                "normalization stats frames",
                window - 1,
                stats.len(),
            ));
        }
        Ok(Self { layer, stats })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
