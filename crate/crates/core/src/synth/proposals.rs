use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{hash_words, rng_for, SyntheticVideo};
use crate::geometry::{iou, BBox};

/// Stand-in for a per-frame region proposal network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    pub per_object: usize,
    pub background: usize,
    /// Center jitter as a fraction of box size; also the std of the log-size
    /// jitter.
    pub jitter_std: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            per_object: 6,
            background: 8,
            jitter_std: 0.12,
        }
    }
}

/// Jittered copies of every visible ground-truth box plus uniformly random
/// background boxes, all clamped into the frame. Object proposals come first,
/// in track order.
pub fn static_proposals(
    video: &SyntheticVideo,
    frame: usize,
    cfg: &ProposalConfig,
    seed: u64,
) -> Vec<BBox> {
    let mut rng = rng_for(hash_words(&[video.seed, seed, frame as u64]), 0x9E0);
    let vcfg = &video.config;
    let (width, height, min_size) = (vcfg.width, vcfg.height, vcfg.min_size);
    let mut out = Vec::with_capacity(cfg.per_object * video.tracks.len() + cfg.background);

    if cfg.jitter_std > 0.0 {
        let jitter = Normal::new(0.0, cfg.jitter_std).expect("jitter std is finite");
        for (_, g) in video.gt_boxes(frame) {
            for _ in 0..cfg.per_object {
                let x = g.x() + jitter.sample(&mut rng) * g.w();
                let y = g.y() + jitter.sample(&mut rng) * g.h();
                let w = g.w() * jitter.sample(&mut rng).exp();
                let h = g.h() * jitter.sample(&mut rng).exp();
                let b = BBox::new(x, y, w.max(min_size), h.max(min_size)).expect("positive size");
                out.push(b.clamp_to_frame(width, height, min_size).0);
            }
        }
    } else {
        for (_, g) in video.gt_boxes(frame) {
            out.extend(std::iter::repeat_n(g, cfg.per_object));
        }
    }

    let [lo, hi] = vcfg.object_size;
    for _ in 0..cfg.background {
        let w = rng.random_range(lo..=hi);
        let h = w * rng.random_range(vcfg.aspect[0]..=vcfg.aspect[1]);
        let x = rng.random_range(w / 2.0..=width - w / 2.0);
        let y = rng.random_range(h / 2.0..=height - h / 2.0);
        out.push(BBox::new(x, y, w, h).expect("positive size"));
    }
    out
}

/// Fraction of visible ground-truth boxes on `frame` covered by some
/// proposal at IoU >= `threshold`, as `(covered, total)`.
pub fn proposal_recall(
    video: &SyntheticVideo,
    frame: usize,
    proposals: &[BBox],
    threshold: f64,
) -> (usize, usize) {
    let gts = video.gt_boxes(frame);
    let covered = gts
        .iter()
        .filter(|(_, g)| proposals.iter().any(|p| iou(p, g) >= threshold))
        .count();
    (covered, gts.len())
}
