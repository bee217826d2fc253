use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tubelet_features, ClassifierMode, TemporalClassifier};
use crate::geometry::{encode_movement, iou};
use crate::nn::{Parameters, SgdMomentum};
use crate::synth::{rng_for, SyntheticVideo};
use crate::tubelet::TubeletProposal;
use crate::{Error, Result};

/// IoU above which a tubelet box takes the label of its best ground truth.
pub const LABEL_IOU: f64 = 0.5;

/// One training tubelet: per-frame classification features, labels
/// (0 = background) and, on foreground frames, the movement from the
/// tubelet box to its ground-truth box.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeletSample {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub box_targets: Vec<Option<[f64; 4]>>,
}

/// Per-frame labels of a tubelet: the class of the highest-IoU visible
/// ground-truth box, shifted by one, when that IoU exceeds 0.5; otherwise
/// background. Ties go to the lower track index.
pub fn label_tubelet_frames(video: &SyntheticVideo, tubelet: &TubeletProposal) -> Vec<usize> {
    label_and_targets(video, tubelet).0
}

fn label_and_targets(
    video: &SyntheticVideo,
    tubelet: &TubeletProposal,
) -> (Vec<usize>, Vec<Option<[f64; 4]>>) {
    tubelet
        .boxes
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let mut best: Option<(f64, usize, _)> = None;
            for (track, gt) in video.gt_boxes(tubelet.anchor_frame + k) {
                let v = iou(b, &gt);
                if best.as_ref().is_none_or(|(bv, _, _)| v > *bv) {
                    best = Some((v, track, gt));
                }
            }
            match best {
                Some((v, track, gt)) if v > LABEL_IOU => (
                    video.tracks[track].class_id + 1,
                    Some(encode_movement(b, &gt).to_array()),
                ),
                _ => (0, None),
            }
        })
        .unzip()
}

pub fn build_classifier_corpus(
    video: &SyntheticVideo,
    tubelets: &[TubeletProposal],
) -> Vec<TubeletSample> {
    tubelets
        .par_iter()
        .map(|t| {
            let (labels, box_targets) = label_and_targets(video, t);
            TubeletSample {
                features: tubelet_features(video, t),
                labels,
                box_targets,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub mode: ClassifierMode,
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub iterations: usize,
    /// The learning rate is multiplied by `decay_factor` every
    /// `decay_every` iterations.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub init_std: f64,
    pub clip_norm: Option<f64>,
    /// Weight of the box-refinement loss; 0 trains no box head.
    pub box_loss_weight: f64,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            mode: ClassifierMode::EncoderDecoder,
            hidden: 64,
            lr: 0.1,
            momentum: 0.9,
            batch: 32,
            iterations: 2000,
            decay_every: 200,
            decay_factor: 0.5,
            init_std: 0.0002,
            clip_norm: None,
            box_loss_weight: 0.0,
            log_every: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: TemporalClassifier,
    /// Mean mini-batch loss of every iteration.
    pub batch_loss: Vec<f64>,
}

pub fn train_classifier(
    corpus: &[TubeletSample],
    num_outputs: usize,
    cfg: &ClassifierTrainConfig,
) -> Result<TrainedClassifier> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Invalid("classifier training corpus is empty".into()))?;
    let input_dim = first
        .features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Invalid("empty tubelet in classifier corpus".into()))?;
    if cfg.batch == 0 || cfg.decay_every == 0 {
        return Err(Error::Config("batch and decay_every must be >= 1".into()));
    }
    if let Some(bad) = corpus
        .iter()
        .flat_map(|s| &s.labels)
        .find(|&&l| l >= num_outputs)
    {
        return Err(Error::Invalid(format!(
            "label {bad} out of range for {num_outputs} outputs"
        )));
    }

    let mut rng = rng_for(cfg.seed, 0xC1A5);
    let mut model = TemporalClassifier::new(
        cfg.mode,
        input_dim,
        cfg.hidden,
        num_outputs,
        cfg.box_loss_weight > 0.0,
        cfg.init_std,
        &mut rng,
    )?;
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum)?.with_clip_norm(cfg.clip_norm);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut batch_loss = Vec::with_capacity(cfg.iterations);
    let mut grads = model.zeros_like();

    for iter in 0..cfg.iterations {
        opt.learning_rate = cfg.lr * cfg.decay_factor.powi((iter / cfg.decay_every) as i32);
        let mut batch = Vec::with_capacity(cfg.batch);
        while batch.len() < cfg.batch.min(corpus.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        grads.zero();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in &batch {
            loss +=
                model.accumulate_grad(&corpus[i], cfg.box_loss_weight, scale, &mut grads)? * scale;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "classifier loss at iteration {iter} (mode {}, lr {}); try a smaller learning rate or clip_norm",
                cfg.mode, opt.learning_rate
            )));
        }
        opt.step(&mut model, &grads)?;
        if cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations) {
            log::info!(
                "stage=train-lstm mode={} iter={iter} metric=loss value={loss:.9}",
                cfg.mode
            );
        }
        batch_loss.push(loss);
    }
    Ok(TrainedClassifier { model, batch_loss })
}
