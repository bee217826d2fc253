//! Tubelet generation by chaining TPN windows.
//!
//! A tubelet starts at a static anchor box. Features are pooled at the
//! current anchor over `w` frames, the predicted movements are decoded into
//! boxes for the next `w - 1` frames, and the last decoded box becomes the
//! anchor of the next window. When fewer than `w - 1` frames remain, the
//! window runs as usual and its outputs are truncated; window frames past the
//! end of the video reuse the last frame's features.

mod table;

pub use table::{load_tubelets, read_tubelets, save_tubelets, write_tubelets, TUBELET_HEADER};

use rayon::prelude::*;

use crate::geometry::{decode_movement_capped, BBox, MovementDelta, DEFAULT_DECODE_CAP};
use crate::synth::{FrameContext, SyntheticVideo};
use crate::tpn::TpnModel;
use crate::{Error, Result};

/// Smallest side a generated box may have, px.
pub const MIN_BOX_SIZE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TubeletProposal {
    pub anchor_frame: usize,
    /// One box per frame, starting at `anchor_frame`.
    pub boxes: Vec<BBox>,
    pub source_anchor: BBox,
    /// Decodes whose log-size movement hit the cap.
    pub capped_decodes: usize,
    /// Boxes (anchor included) that had to be clamped into the frame.
    pub clamped_boxes: usize,
    /// Per-frame class distribution, background first, once classified.
    pub scores: Option<Vec<Vec<f64>>>,
}

impl TubeletProposal {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.anchor_frame..self.anchor_frame + self.boxes.len()
    }
}

/// A tubelet being grown.
#[derive(Debug, Clone)]
struct Grower {
    tubelet: TubeletProposal,
    length: usize,
}

impl Grower {
    fn new(video: &SyntheticVideo, anchor: BBox, start: usize, length: usize) -> Self {
        let (first, clamped) = anchor.clamp_to_frame(video.width(), video.height(), MIN_BOX_SIZE);
        Self {
            tubelet: TubeletProposal {
                anchor_frame: start,
                boxes: vec![first],
                source_anchor: anchor,
                capped_decodes: 0,
                clamped_boxes: usize::from(clamped),
                scores: None,
            },
            length,
        }
    }

    fn done(&self) -> bool {
        self.tubelet.boxes.len() >= self.length
    }

    /// First frame of the next window.
    fn window_start(&self) -> usize {
        self.tubelet.anchor_frame + self.tubelet.boxes.len() - 1
    }

    /// Runs one window. `contexts[k]` is the context for window frame `k`.
    fn advance(
        &mut self,
        video: &SyntheticVideo,
        contexts: &[FrameContext<'_>],
        model: &TpnModel,
    ) -> Result<()> {
        let anchor = *self.tubelet.boxes.last().expect("tubelet holds its anchor");
        let features: Vec<Vec<f64>> = contexts.iter().map(|c| c.regression(&anchor)).collect();
        let deltas = model.predict(&features)?;
        let remaining = self.length - self.tubelet.boxes.len();
        for d in deltas.into_iter().take(remaining) {
            let (bx, capped) = decode_clamped_delta(&anchor, d)?;
            self.tubelet.capped_decodes += usize::from(capped);
            let (bx, clamped) = bx.clamp_to_frame(video.width(), video.height(), MIN_BOX_SIZE);
            self.tubelet.clamped_boxes += usize::from(clamped);
            self.tubelet.boxes.push(bx);
        }
        Ok(())
    }
}

fn decode_clamped_delta(anchor: &BBox, mut d: MovementDelta) -> Result<(BBox, bool)> {
    if !d.is_finite() {
        return Err(Error::NonFinite("predicted movement".into()));
    }
    let cap = DEFAULT_DECODE_CAP;
    let capped = d.dw.abs() > cap || d.dh.abs() > cap;
    d.dw = d.dw.clamp(-cap, cap);
    d.dh = d.dh.clamp(-cap, cap);
    Ok((decode_movement_capped(anchor, &d, cap)?, capped))
}

fn window_contexts(video: &SyntheticVideo, start: usize, window: usize) -> Vec<FrameContext<'_>> {
    let last = video.frames() - 1;
    (start..start + window)
        .map(|f| video.frame_context(f.min(last)))
        .collect()
}

fn check_request(
    video: &SyntheticVideo,
    start: usize,
    length: usize,
    model: &TpnModel,
) -> Result<()> {
    if length == 0 {
        return Err(Error::Invalid("tubelet length must be >= 1".into()));
    }
    if start + length > video.frames() {
        return Err(Error::Invalid(format!(
            "tubelet of length {length} from frame {start} overruns a {}-frame video",
            video.frames()
        )));
    }
    if model.window() < 2 {
        return Err(Error::Config("TPN window must be >= 2".into()));
    }
    Ok(())
}

/// Grows one tubelet of `length` frames from `anchor` on frame `start`.
pub fn generate_tubelet(
    video: &SyntheticVideo,
    anchor: BBox,
    start: usize,
    length: usize,
    model: &TpnModel,
) -> Result<TubeletProposal> {
    check_request(video, start, length, model)?;
    let mut g = Grower::new(video, anchor, start, length);
    while !g.done() {
        let contexts = window_contexts(video, g.window_start(), model.window());
        g.advance(video, &contexts, model)?;
    }
    Ok(g.tubelet)
}

/// Anchors on one starting frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub frame: usize,
    pub anchors: Vec<BBox>,
}

/// Grows one tubelet per anchor. Anchors starting on the same frame advance
/// in lockstep so each window's frame contexts are resolved once and shared;
/// the result is identical to calling [`generate_tubelet`] per anchor.
pub fn generate_all(
    video: &SyntheticVideo,
    anchor_sets: &[AnchorSet],
    length: usize,
    model: &TpnModel,
) -> Result<Vec<TubeletProposal>> {
    let mut out = Vec::new();
    for set in anchor_sets {
        check_request(video, set.frame, length, model)?;
        let mut growers: Vec<Grower> = set
            .anchors
            .iter()
            .map(|&a| Grower::new(video, a, set.frame, length))
            .collect();
        let mut start = set.frame;
        while growers.iter().any(|g| !g.done()) {
            let contexts = window_contexts(video, start, model.window());
            growers
                .par_iter_mut()
                .try_for_each(|g| g.advance(video, &contexts, model))?;
            start += model.window() - 1;
        }
        out.extend(growers.into_iter().map(|g| g.tubelet));
    }
    Ok(out)
}

/// Same result as [`generate_all`], one tubelet at a time.
pub fn generate_all_sequential(
    video: &SyntheticVideo,
    anchor_sets: &[AnchorSet],
    length: usize,
    model: &TpnModel,
) -> Result<Vec<TubeletProposal>> {
    anchor_sets
        .iter()
        .flat_map(|set| set.anchors.iter().map(move |&a| (set.frame, a)))
        .map(|(f, a)| generate_tubelet(video, a, f, length, model))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use crate::synth::{generate_video, WorldConfig};
    use crate::tpn::{NormalizationStats, RegressionLayer};

    fn zero_motion_model(f: usize, w: usize) -> TpnModel {
        TpnModel {
            layer: RegressionLayer::zeros(f, w).unwrap(),
            stats: NormalizationStats::identity(w),
        }
    }

    #[test]
    fn length_one_is_the_anchor() {
        let v = generate_video(&WorldConfig::default(), 1).unwrap();
        let a = v.tracks[0].boxes[3];
        let t = generate_tubelet(&v, a, 3, 1, &zero_motion_model(32, 5)).unwrap();
        assert_eq!(t.boxes, vec![a]);
    }

    #[test]
    fn zero_motion_model_repeats_the_anchor() {
        let v = generate_video(&WorldConfig::default(), 2).unwrap();
        let a = BBox::new(200.0, 100.0, 50.0, 40.0).unwrap();
        for w in [2, 3, 5, 7] {
            let t = generate_tubelet(&v, a, 0, 20, &zero_motion_model(32, w)).unwrap();
            assert_eq!(t.boxes.len(), 20);
            assert!(t.boxes.iter().all(|b| *b == a));
        }
    }

    #[test]
    fn bias_only_model_chains_windows() {
        // constant +0.1 dx per frame offset k (relative to the window anchor)
        let v = generate_video(&WorldConfig::default(), 2).unwrap();
        let w = 3;
        let mut layer = RegressionLayer::zeros(32, w).unwrap();
        layer.dense.bias =
            Matrix::from_vec(1, 8, vec![0.1, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0]).unwrap();
        let model = TpnModel {
            layer,
            stats: NormalizationStats::identity(w),
        };
        let a = BBox::new(100.0, 100.0, 10.0, 10.0).unwrap();
        let t = generate_tubelet(&v, a, 0, 6, &model).unwrap();
        let xs: Vec<f64> = t.boxes.iter().map(|b| b.x()).collect();
        // windows: frames 0-2 from anchor 100, frames 3-4 from anchor at 102,
        // frame 5 from anchor 104 truncated to one output
        let expect = [100.0, 101.0, 102.0, 103.0, 104.0, 105.0];
        for (x, e) in xs.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12, "{xs:?}");
        }
    }

    #[test]
    fn single_window_when_length_equals_window() {
        let v = generate_video(&WorldConfig::default(), 3).unwrap();
        let mut rng = crate::synth::rng_for(1, 1);
        let model = TpnModel {
            layer: RegressionLayer::gaussian(32, 5, 0.01, &mut rng).unwrap(),
            stats: NormalizationStats::identity(5),
        };
        let a = v.tracks[0].boxes[2];
        let t = generate_tubelet(&v, a, 2, 5, &model).unwrap();
        let feats: Vec<Vec<f64>> = (2..7).map(|f| v.pool_regression_features(&a, f)).collect();
        let deltas = model.predict(&feats).unwrap();
        for (k, d) in deltas.iter().enumerate() {
            let (b, _) = decode_clamped_delta(&a, *d).unwrap();
            let b = b.clamp_to_frame(v.width(), v.height(), MIN_BOX_SIZE).0;
            assert_eq!(t.boxes[k + 1], b);
        }
    }

    #[test]
    fn counts_capped_and_clamped_boxes() {
        let v = generate_video(&WorldConfig::default(), 4).unwrap();
        let mut layer = RegressionLayer::zeros(32, 2).unwrap();
        layer.dense.bias = Matrix::from_vec(1, 4, vec![50.0, 0.0, 30.0, 0.0]).unwrap();
        let model = TpnModel {
            layer,
            stats: NormalizationStats::identity(2),
        };
        let t = generate_tubelet(
            &v,
            BBox::new(100.0, 100.0, 20.0, 20.0).unwrap(),
            0,
            4,
            &model,
        )
        .unwrap();
        assert_eq!(t.capped_decodes, 3);
        assert!(t.clamped_boxes >= 3);
        for b in &t.boxes {
            let [x1, y1, x2, y2] = b.corners();
            assert!(x1 >= 0.0 && y1 >= 0.0 && x2 <= v.width() && y2 <= v.height());
        }
    }

    #[test]
    fn rejects_overruns() {
        let v = generate_video(&WorldConfig::default(), 4).unwrap();
        let a = v.tracks[0].boxes[0];
        let m = zero_motion_model(32, 5);
        assert!(generate_tubelet(&v, a, 50, 20, &m).is_err());
        assert!(generate_tubelet(&v, a, 0, 0, &m).is_err());
    }

    #[test]
    fn batched_equals_sequential() {
        let v = generate_video(&WorldConfig::default(), 5).unwrap();
        let mut rng = crate::synth::rng_for(2, 1);
        let model = TpnModel {
            layer: RegressionLayer::gaussian(32, 5, 0.05, &mut rng).unwrap(),
            stats: NormalizationStats::identity(5),
        };
        let sets: Vec<AnchorSet> = [0, 20]
            .iter()
            .map(|&f| AnchorSet {
                frame: f,
                anchors: crate::synth::static_proposals(&v, f, &Default::default(), 3)[..3]
                    .to_vec(),
            })
            .collect();
        let a = generate_all(&v, &sets, 20, &model).unwrap();
        let b = generate_all_sequential(&v, &sets, 20, &model).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
    }
}
