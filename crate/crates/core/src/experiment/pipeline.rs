use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{EvalConfig, ExperimentConfig};
use crate::classifier::{label_tubelet_frames, TemporalClassifier};
use crate::eval::{
    average_precision, classification_accuracy, nms, tubelet_detections, video_ground_truth,
    ClassificationReport, DetectionReport, GroundTruth,
};
use crate::synth::{
    generate_video, static_proposals, Dataset, FrameProposals, SyntheticVideo, WorldConfig,
};
use crate::tpn::{build_corpus, ideal_tubelet, match_anchors, train_tpn, TpnModel, TrainedTpn};
use crate::tubelet::{generate_all, AnchorSet, TubeletProposal};
use crate::{BBox, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn seed_offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 500,
        }
    }
}

pub fn make_videos(
    world: &WorldConfig,
    seed: u64,
    split: Split,
    count: usize,
) -> Result<Vec<SyntheticVideo>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_video(world, seed * 1000 + split.seed_offset() + i))
        .collect()
}

/// Anchor frames `0, stride, 2 * stride, ...` that leave room for a full
/// tubelet.
pub fn anchor_frames(frames: usize, length: usize, stride: usize) -> Vec<usize> {
    if length > frames || stride == 0 {
        return Vec::new();
    }
    (0..=frames - length).step_by(stride).collect()
}

/// A video with static proposals on every anchor frame.
pub fn make_dataset(video: SyntheticVideo, cfg: &ExperimentConfig) -> Dataset {
    let proposals = anchor_frames(
        video.frames(),
        cfg.tubelet.length,
        cfg.tubelet.anchor_stride,
    )
    .into_iter()
    .map(|frame| FrameProposals {
        frame,
        boxes: static_proposals(&video, frame, &cfg.data.proposals, cfg.data.proposal_seed),
    })
    .collect();
    Dataset {
        video,
        proposal_seed: cfg.data.proposal_seed,
        proposals,
    }
}

pub fn anchor_sets(dataset: &Dataset) -> Vec<AnchorSet> {
    dataset
        .proposals
        .iter()
        .map(|p| AnchorSet {
            frame: p.frame,
            anchors: p.boxes.clone(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TpnStage {
    pub two_frame: TrainedTpn,
    pub multi_frame: Option<TrainedTpn>,
}

impl TpnStage {
    /// The model used for tubelet generation.
    pub fn model(&self) -> &TpnModel {
        &self.multi_frame.as_ref().unwrap_or(&self.two_frame).model
    }
}

/// Trains the two-frame model and, for a longer configured window, the
/// multi-frame model (block-initialized from the two-frame one if asked).
pub fn train_tpn_stage(videos: &[SyntheticVideo], cfg: &ExperimentConfig) -> Result<TpnStage> {
    let corpus2 = build_corpus(videos, 2, &cfg.tpn.corpus)?;
    log::info!(
        "stage=train-tpn window=2 metric=samples value={}",
        corpus2.len()
    );
    let two_frame = train_tpn(&corpus2, &cfg.two_frame_config(), None)?;
    let multi = cfg.multi_frame_config();
    let multi_frame = if multi.window > 2 {
        let corpus = build_corpus(videos, multi.window, &cfg.tpn.corpus)?;
        log::info!(
            "stage=train-tpn window={} metric=samples value={}",
            multi.window,
            corpus.len()
        );
        Some(train_tpn(&corpus, &multi, Some(&two_frame.model))?)
    } else {
        None
    };
    Ok(TpnStage {
        two_frame,
        multi_frame,
    })
}

/// Tubelets of `length` frames from every stored proposal of `dataset`.
pub fn video_tubelets(
    dataset: &Dataset,
    model: &TpnModel,
    length: usize,
) -> Result<Vec<TubeletProposal>> {
    generate_all(&dataset.video, &anchor_sets(dataset), length, model)
}

pub type TubeletPairs = (Vec<Vec<BBox>>, Vec<Vec<BBox>>);

/// Predicted and ideal boxes of every tubelet whose anchor follows a
/// ground-truth track visible over the whole tubelet.
pub fn ideal_pairs(video: &SyntheticVideo, tubelets: &[TubeletProposal]) -> Result<TubeletPairs> {
    let mut predicted = Vec::new();
    let mut ideal = Vec::new();
    for t in tubelets {
        let gt = video.gt_boxes(t.anchor_frame);
        let Some(&(_, track)) = match_anchors(std::slice::from_ref(&t.source_anchor), &gt).first()
        else {
            continue;
        };
        if let Some(boxes) = ideal_tubelet(video, &t.source_anchor, t.anchor_frame, track, t.len())?
        {
            predicted.push(t.boxes.clone());
            ideal.push(boxes);
        }
    }
    Ok((predicted, ideal))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEvaluation {
    pub classification: ClassificationReport,
    pub detection: DetectionReport,
}

/// Scores every tubelet, then measures per-frame accuracy against
/// [`label_tubelet_frames`] and mean AP of the suppressed tubelet boxes
/// against the ground truth of the frames the tubelets cover.
pub fn classify_and_evaluate(
    model: &TemporalClassifier,
    test: &mut [(Dataset, Vec<TubeletProposal>)],
    cfg: &EvalConfig,
) -> Result<ClassifierEvaluation> {
    let (mut dists, mut labels, mut dets, mut gts): (Vec<_>, Vec<_>, Vec<_>, Vec<GroundTruth>) =
        Default::default();
    for (vi, (data, tubelets)) in test.iter_mut().enumerate() {
        let video = &data.video;
        let offset = vi * video.frames();
        model.score_tubelets(video, tubelets)?;
        let mut covered = BTreeSet::new();
        for t in tubelets.iter() {
            labels.push(label_tubelet_frames(video, t));
            dists.push(t.scores.clone().expect("scored above"));
            covered.extend(t.frames());
        }
        dets.extend(nms(
            &tubelet_detections(tubelets, offset)?,
            cfg.nms_threshold,
        ));
        gts.extend(
            video_ground_truth(video, 0..video.frames(), offset)
                .into_iter()
                .filter(|g| covered.contains(&(g.image - offset))),
        );
    }
    if dists.is_empty() {
        return Err(Error::Invalid("no test tubelets to classify".into()));
    }
    Ok(ClassifierEvaluation {
        classification: classification_accuracy(&dists, &labels)?,
        detection: average_precision(&dets, &gts, cfg.iou_threshold, cfg.protocol)?,
    })
}
