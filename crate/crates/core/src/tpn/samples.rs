use serde::{Deserialize, Serialize};

use crate::geometry::{decode_movement, encode_movement, iou, BBox, DeltaKind, MovementDelta};
use crate::synth::{static_proposals, FrameContext, ProposalConfig, SyntheticVideo};
use crate::{Error, Result};

/// Minimum IoU (exclusive) for an anchor to follow a ground-truth track.
pub const POSITIVE_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// Index of the source video in the corpus.
    pub video: usize,
    pub anchor_frame: usize,
    pub anchor: BBox,
    pub matched_track: usize,
    /// One pooled feature vector per window frame, all at the anchor box.
    pub features: Vec<Vec<f64>>,
    /// Movement targets for window frames `2..=w`.
    pub targets: Vec<MovementDelta>,
}

/// Pairs each proposal with its highest-IoU track when that IoU exceeds 0.5.
/// Returns `(proposal index, track index)`; unmatched proposals are dropped.
pub fn match_anchors(proposals: &[BBox], gt: &[(usize, BBox)]) -> Vec<(usize, usize)> {
    proposals
        .iter()
        .enumerate()
        .filter_map(|(pi, p)| {
            let mut best: Option<(usize, f64)> = None;
            for &(k, g) in gt {
                let o = iou(p, &g);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((k, o));
                }
            }
            best.filter(|&(_, o)| o > POSITIVE_IOU)
                .map(|(k, _)| (pi, k))
        })
        .collect()
}

/// Targets for frames `2..=w` of a window: the track's own motion relative
/// to its first-frame box. The anchor plays no part.
pub fn build_targets(window: &[Option<BBox>]) -> Result<Vec<MovementDelta>> {
    let first =
        window.first().copied().flatten().ok_or_else(|| {
            Error::Invalid("track is not visible on the first window frame".into())
        })?;
    window[1..]
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let g = g.ok_or_else(|| {
                Error::Invalid(format!("track is not visible on window frame {}", k + 2))
            })?;
            Ok(encode_movement(&first, &g).with_kind(DeltaKind::Target))
        })
        .collect()
}

/// Builds one sample, or `None` when the window leaves the video or the
/// track disappears inside it.
pub fn build_sample(
    video: &SyntheticVideo,
    video_index: usize,
    anchor: BBox,
    frame: usize,
    track: usize,
    window: usize,
    contexts: Option<&[FrameContext<'_>]>,
) -> Result<Option<TrainingSample>> {
    if frame + window > video.frames() {
        return Ok(None);
    }
    let t = &video.tracks[track];
    if !t.visible_on(frame..frame + window) {
        return Ok(None);
    }
    let gt: Vec<Option<BBox>> = (frame..frame + window).map(|f| t.box_at(f)).collect();
    let targets = build_targets(&gt)?;
    let features = match contexts {
        Some(ctx) => ctx.iter().map(|c| c.regression(&anchor)).collect(),
        None => (frame..frame + window)
            .map(|f| video.pool_regression_features(&anchor, f))
            .collect(),
    };
    Ok(Some(TrainingSample {
        video: video_index,
        anchor_frame: frame,
        anchor,
        matched_track: track,
        features,
        targets,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Frames between consecutive anchor frames.
    pub anchor_stride: usize,
    pub proposals: ProposalConfig,
    pub proposal_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            anchor_stride: 4,
            proposals: ProposalConfig::default(),
            proposal_seed: 17,
        }
    }
}

/// All positive training samples for a `window`-frame layer.
pub fn build_corpus(
    videos: &[SyntheticVideo],
    window: usize,
    cfg: &CorpusConfig,
) -> Result<Vec<TrainingSample>> {
    if cfg.anchor_stride == 0 {
        return Err(Error::Config("anchor_stride must be >= 1".into()));
    }
    let mut out = Vec::new();
    for (vi, video) in videos.iter().enumerate() {
        if video.frames() < window {
            continue;
        }
        for s in (0..=video.frames() - window).step_by(cfg.anchor_stride) {
            let proposals = static_proposals(video, s, &cfg.proposals, cfg.proposal_seed);
            let contexts: Vec<FrameContext<'_>> =
                (s..s + window).map(|f| video.frame_context(f)).collect();
            for (pi, track) in match_anchors(&proposals, &video.gt_boxes(s)) {
                if let Some(sample) =
                    build_sample(video, vi, proposals[pi], s, track, window, Some(&contexts))?
                {
                    out.push(sample);
                }
            }
        }
    }
    Ok(out)
}

/// The tubelet an anchor would follow if it copied its track's motion
/// exactly, over `length` frames from `frame`. `None` if the track is not
/// visible throughout.
pub fn ideal_tubelet(
    video: &SyntheticVideo,
    anchor: &BBox,
    frame: usize,
    track: usize,
    length: usize,
) -> Result<Option<Vec<BBox>>> {
    if frame + length > video.frames() {
        return Ok(None);
    }
    let t = &video.tracks[track];
    if !t.visible_on(frame..frame + length) {
        return Ok(None);
    }
    let g0 = t.boxes[frame];
    (frame..frame + length)
        .map(|f| decode_movement(anchor, &encode_movement(&g0, &t.boxes[f])))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}
