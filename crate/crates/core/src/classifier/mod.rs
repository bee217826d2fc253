//! Temporal classification of tubelets.
//!
//! Three modes share one interface:
//!
//! * `per_frame_linear` scores every frame from its own features;
//! * `vanilla_lstm` runs one LSTM forward from a zero state and scores each
//!   hidden state;
//! * `encoder_decoder` runs an encoder LSTM over the whole tubelet, copies its
//!   final `(c, h)` into a decoder, runs the decoder over the reversed
//!   features and scores the decoder states, re-reversed to frame order. Every
//!   frame's score therefore depends on the whole tubelet.
//!
//! Class index 0 is background; class `k` of the world is index `k + 1`.

mod train;

pub use train::{
    build_classifier_corpus, label_tubelet_frames, train_classifier, ClassifierTrainConfig,
    TrainedClassifier, TubeletSample,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{
    smoothed_l1_loss, softmax, softmax_cross_entropy, Checkpoint, DenseLayer, LstmCache, LstmCell,
    LstmState, Matrix, Parameters,
};
use crate::synth::SyntheticVideo;
use crate::tubelet::TubeletProposal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    PerFrameLinear,
    VanillaLstm,
    EncoderDecoder,
}

impl ClassifierMode {
    pub const ALL: [ClassifierMode; 3] = [
        ClassifierMode::PerFrameLinear,
        ClassifierMode::VanillaLstm,
        ClassifierMode::EncoderDecoder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierMode::PerFrameLinear => "per_frame_linear",
            ClassifierMode::VanillaLstm => "vanilla_lstm",
            ClassifierMode::EncoderDecoder => "encoder_decoder",
        }
    }
}

impl fmt::Display for ClassifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown classifier mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalClassifier {
    mode: ClassifierMode,
    input_dim: usize,
    hidden: usize,
    pub encoder: Option<LstmCell>,
    pub decoder: Option<LstmCell>,
    pub class_head: DenseLayer,
    pub box_head: Option<DenseLayer>,
}

/// Intermediate values of one forward pass.
struct Trace {
    encoder: Vec<LstmCache>,
    /// Decoder caches in decoder step order (last frame first).
    decoder: Vec<LstmCache>,
    /// Head input per frame, in frame order.
    head_inputs: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
    boxes: Option<Vec<Vec<f64>>>,
}

impl TemporalClassifier {
    /// A model with Gaussian weights of std `init_std` and zero biases.
    /// `num_outputs` counts background.
    pub fn new<R: Rng + ?Sized>(
        mode: ClassifierMode,
        input_dim: usize,
        hidden: usize,
        num_outputs: usize,
        with_box_head: bool,
        init_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || num_outputs < 2 {
            return Err(Error::Config(
                "classifier needs input_dim >= 1 and >= 2 outputs".into(),
            ));
        }
        if mode != ClassifierMode::PerFrameLinear && hidden == 0 {
            return Err(Error::Config("LSTM hidden size must be >= 1".into()));
        }
        let head_dim = if mode == ClassifierMode::PerFrameLinear {
            input_dim
        } else {
            hidden
        };
        let encoder = (mode != ClassifierMode::PerFrameLinear)
            .then(|| LstmCell::gaussian(input_dim, hidden, init_std, rng));
        let decoder = (mode == ClassifierMode::EncoderDecoder)
            .then(|| LstmCell::gaussian(input_dim, hidden, init_std, rng));
        let class_head = DenseLayer::gaussian(head_dim, num_outputs, init_std, rng);
        let box_head = with_box_head.then(|| DenseLayer::gaussian(head_dim, 4, init_std, rng));
        Ok(Self {
            mode,
            input_dim,
            hidden: if mode == ClassifierMode::PerFrameLinear {
                0
            } else {
                hidden
            },
            encoder,
            decoder,
            class_head,
            box_head,
        })
    }

    pub fn zeros(
        mode: ClassifierMode,
        input_dim: usize,
        hidden: usize,
        num_outputs: usize,
        with_box_head: bool,
    ) -> Result<Self> {
        let mut rng = crate::synth::rng_for(0, 0);
        let mut m = Self::new(
            mode,
            input_dim,
            hidden,
            num_outputs,
            with_box_head,
            0.0,
            &mut rng,
        )?;
        m.zero();
        Ok(m)
    }

    pub fn mode(&self) -> ClassifierMode {
        self.mode
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// LSTM width; 0 for the per-frame model.
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Number of classes including background.
    pub fn num_outputs(&self) -> usize {
        self.class_head.out_dim()
    }

    fn trace(&self, features: &[Vec<f64>]) -> Result<Trace> {
        if features.is_empty() {
            return Err(Error::Invalid("cannot classify an empty tubelet".into()));
        }
        if let Some(bad) = features.iter().find(|u| u.len() != self.input_dim) {
            return Err(Error::dim("classifier input", self.input_dim, bad.len()));
        }
        let l = features.len();
        let mut encoder = Vec::new();
        let mut decoder = Vec::new();
        let head_inputs: Vec<Vec<f64>> = match self.mode {
            ClassifierMode::PerFrameLinear => features.to_vec(),
            ClassifierMode::VanillaLstm => {
                let cell = self.encoder.as_ref().expect("vanilla mode has an encoder");
                let mut state = LstmState::zeros(self.hidden);
                let mut out = Vec::with_capacity(l);
                for u in features {
                    let (next, cache) = cell.step_cached(&state, u)?;
                    out.push(next.h.clone());
                    encoder.push(cache);
                    state = next;
                }
                out
            }
            ClassifierMode::EncoderDecoder => {
                let enc = self
                    .encoder
                    .as_ref()
                    .expect("encoder-decoder mode has an encoder");
                let dec = self
                    .decoder
                    .as_ref()
                    .expect("encoder-decoder mode has a decoder");
                let mut state = LstmState::zeros(self.hidden);
                for u in features {
                    let (next, cache) = enc.step_cached(&state, u)?;
                    encoder.push(cache);
                    state = next;
                }
                let mut out = vec![Vec::new(); l];
                for t in (0..l).rev() {
                    let (next, cache) = dec.step_cached(&state, &features[t])?;
                    out[t] = next.h.clone();
                    decoder.push(cache);
                    state = next;
                }
                out
            }
        };
        let logits = head_inputs
            .iter()
            .map(|x| self.class_head.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let boxes = match &self.box_head {
            Some(head) => Some(
                head_inputs
                    .iter()
                    .map(|x| head.forward(x))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(Trace {
            encoder,
            decoder,
            head_inputs,
            logits,
            boxes,
        })
    }

    /// Per-frame class distributions, background first.
    pub fn classify(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .trace(features)?
            .logits
            .iter()
            .map(|z| softmax(z))
            .collect())
    }

    /// Per-frame box-refinement movements, if the model has a box head.
    pub fn refine(&self, features: &[Vec<f64>]) -> Result<Option<Vec<[f64; 4]>>> {
        Ok(self
            .trace(features)?
            .boxes
            .map(|b| b.into_iter().map(|v| [v[0], v[1], v[2], v[3]]).collect()))
    }

    /// Pools classification features along the tubelet and scores every frame.
    pub fn classify_tubelet(
        &self,
        video: &SyntheticVideo,
        tubelet: &TubeletProposal,
    ) -> Result<Vec<Vec<f64>>> {
        self.classify(&tubelet_features(video, tubelet))
    }

    /// Fills `scores` of every tubelet. Tubelets are independent, so this
    /// runs in parallel.
    pub fn score_tubelets(
        &self,
        video: &SyntheticVideo,
        tubelets: &mut [TubeletProposal],
    ) -> Result<()> {
        tubelets.par_iter_mut().try_for_each(|t| {
            t.scores = Some(self.classify_tubelet(video, t)?);
            Ok(())
        })
    }

    /// Mean per-frame cross-entropy (plus the weighted box loss on frames
    /// that have a box target) and its gradient.
    pub fn loss_and_grad(
        &self,
        sample: &TubeletSample,
        box_weight: f64,
    ) -> Result<(f64, TemporalClassifier)> {
        let mut grads = self.zeros_like();
        let loss = self.accumulate_grad(sample, box_weight, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds `scale` times the sample gradient into `grads`; returns the
    /// sample loss.
    pub(crate) fn accumulate_grad(
        &self,
        sample: &TubeletSample,
        box_weight: f64,
        scale: f64,
        grads: &mut TemporalClassifier,
    ) -> Result<f64> {
        let l = sample.features.len();
        if sample.labels.len() != l {
            return Err(Error::dim("tubelet labels", l, sample.labels.len()));
        }
        let tr = self.trace(&sample.features)?;
        let per_frame = 1.0 / l as f64;
        let mut loss = 0.0;
        let mut d_head: Vec<Vec<f64>> = Vec::with_capacity(l);
        for t in 0..l {
            let (ce, mut dz) = softmax_cross_entropy(&tr.logits[t], sample.labels[t])?;
            loss += ce * per_frame;
            dz.iter_mut().for_each(|g| *g *= per_frame * scale);
            let mut dx = self
                .class_head
                .backward(&tr.head_inputs[t], &dz, &mut grads.class_head);
            if box_weight > 0.0 {
                if let (Some(head), Some(out), Some(target)) =
                    (&self.box_head, &tr.boxes, sample.box_targets[t])
                {
                    let (bl, mut db) = smoothed_l1_loss(&out[t], &target)?;
                    loss += box_weight * bl * per_frame;
                    db.iter_mut()
                        .for_each(|g| *g *= box_weight * per_frame * scale);
                    let gh = grads
                        .box_head
                        .as_mut()
                        .expect("gradient layout mirrors the model");
                    let dx_box = head.backward(&tr.head_inputs[t], &db, gh);
                    dx.iter_mut().zip(dx_box).for_each(|(a, b)| *a += b);
                }
            }
            d_head.push(dx);
        }

        match self.mode {
            ClassifierMode::PerFrameLinear => {}
            ClassifierMode::VanillaLstm => {
                let cell = self.encoder.as_ref().expect("vanilla mode has an encoder");
                let g = grads
                    .encoder
                    .as_mut()
                    .expect("gradient layout mirrors the model");
                let mut d_state = LstmState::zeros(self.hidden);
                for t in (0..l).rev() {
                    let d_h: Vec<f64> = d_head[t]
                        .iter()
                        .zip(&d_state.h)
                        .map(|(a, b)| a + b)
                        .collect();
                    d_state = cell.backward_step(&tr.encoder[t], &d_h, &d_state.c, g).1;
                }
            }
            ClassifierMode::EncoderDecoder => {
                let enc = self
                    .encoder
                    .as_ref()
                    .expect("encoder-decoder mode has an encoder");
                let dec = self
                    .decoder
                    .as_ref()
                    .expect("encoder-decoder mode has a decoder");
                let mut d_state = LstmState::zeros(self.hidden);
                {
                    let g = grads
                        .decoder
                        .as_mut()
                        .expect("gradient layout mirrors the model");
                    // decoder step k handled frame l - 1 - k
                    for k in (0..l).rev() {
                        let t = l - 1 - k;
                        let d_h: Vec<f64> = d_head[t]
                            .iter()
                            .zip(&d_state.h)
                            .map(|(a, b)| a + b)
                            .collect();
                        d_state = dec.backward_step(&tr.decoder[k], &d_h, &d_state.c, g).1;
                    }
                }
                let g = grads
                    .encoder
                    .as_mut()
                    .expect("gradient layout mirrors the model");
                for t in (0..l).rev() {
                    d_state = enc
                        .backward_step(&tr.encoder[t], &d_state.h, &d_state.c, g)
                        .1;
                }
            }
        }
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("model", "classifier");
        ck.set_meta("mode", self.mode);
        ck.set_meta("input_dim", self.input_dim);
        ck.set_meta("hidden", self.hidden);
        ck.set_meta("num_outputs", self.num_outputs());
        ck.set_meta("box_head", self.box_head.is_some());
        ck.add_params("", self);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("model")? != "classifier" {
            return Err(Error::Invalid(
                "checkpoint does not hold a classifier".into(),
            ));
        }
        let mut m = Self::zeros(
            ck.meta("mode")?.parse()?,
            ck.meta_parse("input_dim")?,
            ck.meta_parse("hidden")?,
            ck.meta_parse("num_outputs")?,
            ck.meta_parse("box_head")?,
        )?;
        ck.load_params("", &mut m)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Classification features pooled at every box of a tubelet.
pub fn tubelet_features(video: &SyntheticVideo, tubelet: &TubeletProposal) -> Vec<Vec<f64>> {
    tubelet
        .boxes
        .iter()
        .enumerate()
        .map(|(k, b)| video.pool_classification_features(b, tubelet.anchor_frame + k))
        .collect()
}

impl Parameters for TemporalClassifier {
    fn for_each_param(&self, prefix: &str, f: &mut dyn FnMut(&str, &Matrix)) {
        let p = |name: &str| crate::nn::join_name(prefix, name);
        if let Some(c) = &self.encoder {
            c.for_each_param(&p("encoder"), f);
        }
        if let Some(c) = &self.decoder {
            c.for_each_param(&p("decoder"), f);
        }
        self.class_head.for_each_param(&p("class_head"), f);
        if let Some(h) = &self.box_head {
            h.for_each_param(&p("box_head"), f);
        }
    }

    fn for_each_param_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Matrix)) {
        let p = |name: &str| crate::nn::join_name(prefix, name);
        if let Some(c) = &mut self.encoder {
            c.for_each_param_mut(&p("encoder"), f);
        }
        if let Some(c) = &mut self.decoder {
            c.for_each_param_mut(&p("decoder"), f);
        }
        self.class_head.for_each_param_mut(&p("class_head"), f);
        if let Some(h) = &mut self.box_head {
            h.for_each_param_mut(&p("box_head"), f);
        }
    }
}

#[cfg(test)]
mod tests;
