use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{NormalizationStats, RegressionLayer, TpnModel, TrainingSample};
use crate::geometry::smoothed_l1;
use crate::nn::{smoothed_l1_loss, Parameters, SgdMomentum};
use crate::synth::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    /// Tiled from a trained 2-frame model, see [`super::block_init_model`].
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpnTrainConfig {
    pub window: usize,
    pub init: InitMode,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Std of the Gaussian used for random initialization.
    pub init_std: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TpnTrainConfig {
    fn default() -> Self {
        Self {
            window: 2,
            init: InitMode::Random,
            lr: 0.1,
            momentum: 0.9,
            epochs: 30,
            batch: 32,
            init_std: 0.01,
            clip_norm: None,
            seed: 0,
        }
    }
}

/// Mean corpus loss before training (entry 0) and after every epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

impl TrainLog {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_loss.last().unwrap_or(&f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTpn {
    pub model: TpnModel,
    pub log: TrainLog,
}

type Targets = Vec<Vec<f64>>;

/// Concatenated inputs and flattened normalized targets of a corpus.
pub(crate) fn prepare(
    corpus: &[TrainingSample],
    layer: &RegressionLayer,
    stats: &NormalizationStats,
) -> Result<(Vec<Vec<f64>>, Targets)> {
    let mut xs = Vec::with_capacity(corpus.len());
    let mut ys = Vec::with_capacity(corpus.len());
    for s in corpus {
        xs.push(layer.concat(&s.features)?);
        ys.push(
            stats
                .normalize(&s.targets)?
                .iter()
                .flat_map(|d| d.to_array())
                .collect(),
        );
    }
    Ok((xs, ys))
}

fn mean_loss(layer: &RegressionLayer, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let out = layer.dense.forward(x)?;
        total += out
            .iter()
            .zip(y)
            .map(|(o, t)| smoothed_l1(o - t))
            .sum::<f64>()
            / out.len() as f64;
    }
    Ok(total / xs.len() as f64)
}

/// Mean smoothed-L1 error over samples and normalized target components.
pub fn corpus_loss(
    layer: &RegressionLayer,
    stats: &NormalizationStats,
    corpus: &[TrainingSample],
) -> Result<f64> {
    let (xs, ys) = prepare(corpus, layer, stats)?;
    mean_loss(layer, &xs, &ys)
}

/// Trains the regression layer with mini-batch SGD on the smoothed-L1
/// objective. Block initialization needs the trained 2-frame model.
pub fn train_tpn(
    corpus: &[TrainingSample],
    cfg: &TpnTrainConfig,
    two_frame: Option<&TpnModel>,
) -> Result<TrainedTpn> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Invalid("TPN training corpus is empty".into()))?;
    if cfg.batch == 0 {
        return Err(Error::Config("batch must be >= 1".into()));
    }
    let window = cfg.window;
    if first.features.len() != window {
        return Err(Error::dim("corpus window", window, first.features.len()));
    }
    let feature_dim = first.features[0].len();

    let stats = NormalizationStats::from_targets(corpus.iter().map(|s| s.targets.as_slice()))?;
    let mut layer = match cfg.init {
        InitMode::Random => {
            let mut rng = rng_for(cfg.seed, 0x1217);
            RegressionLayer::gaussian(feature_dim, window, cfg.init_std, &mut rng)?
        }
        InitMode::Block => {
            let src = two_frame.ok_or_else(|| {
                Error::Config("block initialization needs a trained 2-frame model".into())
            })?;
            if src.layer.feature_dim() != feature_dim {
                return Err(Error::dim(
                    "block init feature_dim",
                    feature_dim,
                    src.layer.feature_dim(),
                ));
            }
            super::block_init_model(src, &stats)?
        }
    };
    let (xs, ys) = prepare(corpus, &layer, &stats)?;

    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum)?.with_clip_norm(cfg.clip_norm);
    let mut rng = rng_for(cfg.seed, 0x5407);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut log = TrainLog::default();
    let mut grads = layer.zeros_like();

    let initial = mean_loss(&layer, &xs, &ys)?;
    log::info!("stage=train-tpn window={window} epoch=0 metric=loss value={initial:.9}");
    log.epoch_loss.push(initial);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            grads.zero();
            for &i in batch {
                let out = layer.dense.forward(&xs[i])?;
                let (_, mut d) = smoothed_l1_loss(&out, &ys[i])?;
                let per_component = 1.0 / d.len() as f64;
                d.iter_mut().for_each(|g| *g *= per_component);
                layer.dense.backward(&xs[i], &d, &mut grads.dense);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut layer, &grads)?;
        }
        let loss = mean_loss(&layer, &xs, &ys)?;
        log::info!("stage=train-tpn window={window} epoch={epoch} metric=loss value={loss:.9}");
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "TPN loss at epoch {epoch} (window {window}, lr {}); try a smaller learning rate or clip_norm",
                cfg.lr
            )));
        }
        log.epoch_loss.push(loss);
    }

    Ok(TrainedTpn {
        model: TpnModel { layer, stats },
        log,
    })
}
