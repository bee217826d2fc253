//! Tubelet quality (MAD, MRD, mean IoU), detection average precision and
//! CorLoc, plus per-frame classification accuracy.
//!
//! Every report renders as `key=value` lines through `Display`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::iou;
use crate::synth::SyntheticVideo;
use crate::tubelet::TubeletProposal;
use crate::{BBox, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeletQualityReport {
    /// Mean absolute difference of `(x, y, w, h)` in pixels.
    pub mad: f64,
    /// As `mad`, with x and w differences divided by the target width and
    /// y and h differences by the target height.
    pub mrd: f64,
    pub mean_iou: f64,
    pub n_tubelets: usize,
    pub n_frames: usize,
}

/// Compares predicted tubelets with their ideal counterparts frame by frame.
/// Means are taken over all frames of all tubelets.
pub fn tubelet_quality(
    predicted: &[Vec<BBox>],
    ideal: &[Vec<BBox>],
) -> Result<TubeletQualityReport> {
    if predicted.len() != ideal.len() {
        return Err(Error::dim("tubelet count", ideal.len(), predicted.len()));
    }
    let (mut abs, mut rel, mut overlap, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (p, t) in predicted.iter().zip(ideal) {
        if p.len() != t.len() {
            return Err(Error::dim("tubelet length", t.len(), p.len()));
        }
        for (a, b) in p.iter().zip(t) {
            let d = [a.x() - b.x(), a.y() - b.y(), a.w() - b.w(), a.h() - b.h()].map(f64::abs);
            abs += d.iter().sum::<f64>() / 4.0;
            rel += (d[0] / b.w() + d[1] / b.h() + d[2] / b.w() + d[3] / b.h()) / 4.0;
            overlap += iou(a, b);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Invalid(
            "tubelet quality needs at least one frame".into(),
        ));
    }
    Ok(TubeletQualityReport {
        mad: abs / n as f64,
        mrd: rel / n as f64,
        mean_iou: overlap / n as f64,
        n_tubelets: predicted.len(),
        n_frames: n,
    })
}

impl fmt::Display for TubeletQualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mad={:.4} mrd={:.6} mean_iou={:.6} tubelets={} frames={}",
            self.mad, self.mrd, self.mean_iou, self.n_tubelets, self.n_frames
        )
    }
}

/// One scored box. `image` identifies a frame of a video; matching only
/// happens within an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image: usize,
    pub class: usize,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub image: usize,
    pub class: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApProtocol {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPoints,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub class: usize,
    pub ap: f64,
    pub num_gt: usize,
    pub num_detections: usize,
    /// `(recall, precision)` after each ranked detection.
    pub pr_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Classes with at least one ground-truth box, ascending.
    pub per_class: Vec<ClassAp>,
    pub mean_ap: f64,
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.per_class {
            writeln!(
                f,
                "class={} ap={:.6} gt={} detections={}",
                c.class, c.ap, c.num_gt, c.num_detections
            )?;
        }
        write!(f, "mean_ap={:.6}", self.mean_ap)
    }
}

/// Ranks detections by descending score (ties by ascending index) and
/// greedily matches each to the best-overlapping unmatched ground truth of
/// its image at IoU >= `threshold`. Returns the 0/1 hit flag per ranked
/// detection.
fn match_ranked(dets: &[&Detection], gts: &[&GroundTruth], threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    order
        .iter()
        .map(|&di| {
            let d = dets[di];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if used[gi] || g.image != d.image {
                    continue;
                }
                let o = iou(&d.bbox, &g.bbox);
                if o >= threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            if let Some((gi, _)) = best {
                used[gi] = true;
            }
            best.is_some()
        })
        .collect()
}

fn class_ap(
    class: usize,
    dets: &[&Detection],
    gts: &[&GroundTruth],
    threshold: f64,
    protocol: ApProtocol,
) -> ClassAp {
    let hits = match_ranked(dets, gts, threshold);
    let n_gt = gts.len() as f64;
    let mut tp = 0usize;
    let pr_curve: Vec<(f64, f64)> = hits
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += usize::from(hit);
            (tp as f64 / n_gt, tp as f64 / (k + 1) as f64)
        })
        .collect();
    // envelope[k] = best precision at any later cut
    let mut envelope: Vec<f64> = pr_curve.iter().map(|p| p.1).collect();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let ap = match protocol {
        ApProtocol::AllPoints => {
            let mut ap = 0.0;
            let mut prev = 0.0;
            for (k, &(r, _)) in pr_curve.iter().enumerate() {
                if r > prev {
                    ap += (r - prev) * envelope[k];
                    prev = r;
                }
            }
            ap
        }
        ApProtocol::ElevenPoint => {
            (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    pr_curve
                        .iter()
                        .position(|p| p.0 >= r)
                        .map_or(0.0, |k| envelope[k])
                })
                .sum::<f64>()
                / 11.0
        }
    };
    ClassAp {
        class,
        ap,
        num_gt: gts.len(),
        num_detections: dets.len(),
        pr_curve,
    }
}

/// Per-class AP and their mean over the classes present in `gts`.
/// Detections of classes without ground truth are ignored.
pub fn average_precision(
    dets: &[Detection],
    gts: &[GroundTruth],
    threshold: f64,
    protocol: ApProtocol,
) -> Result<DetectionReport> {
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::NonFinite(format!(
            "detection score {} on image {}",
            d.score, d.image
        )));
    }
    let mut by_class: BTreeMap<usize, (Vec<&Detection>, Vec<&GroundTruth>)> = BTreeMap::new();
    for g in gts {
        by_class.entry(g.class).or_default().1.push(g);
    }
    for d in dets {
        if let Some(entry) = by_class.get_mut(&d.class) {
            entry.0.push(d);
        }
    }
    let per_class: Vec<ClassAp> = by_class
        .into_iter()
        .map(|(c, (d, g))| class_ap(c, &d, &g, threshold, protocol))
        .collect();
    let mean_ap = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    Ok(DetectionReport { per_class, mean_ap })
}

/// Greedy non-maximum suppression within each `(image, class)`: keeps the
/// best-scoring detection (ties by ascending index) and drops those that
/// overlap a kept one at IoU above `threshold`. Survivors keep their input
/// order.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry((d.image, d.class)).or_default().push(i);
    }
    let mut keep = vec![false; dets.len()];
    for mut idx in groups.into_values() {
        idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        let mut kept: Vec<usize> = Vec::new();
        for i in idx {
            if kept
                .iter()
                .all(|&k| iou(&dets[k].bbox, &dets[i].bbox) <= threshold)
            {
                kept.push(i);
                keep[i] = true;
            }
        }
    }
    dets.iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| *d)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorlocReport {
    /// `(class, localized fraction, evaluated frames)` for every requested
    /// class that has ground truth somewhere.
    pub per_class: Vec<(usize, f64, usize)>,
    pub average: f64,
}

impl fmt::Display for CorlocReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, v, n) in &self.per_class {
            writeln!(f, "class={c} corloc={v:.6} frames={n}")?;
        }
        write!(f, "corloc={:.6}", self.average)
    }
}

/// For each class and each image holding ground truth of that class, takes
/// the highest-scoring detection of the class (ties by ascending index) and
/// counts the image as localized when it overlaps a ground truth of that
/// class at IoU > 0.5. Images without ground truth of a class are skipped
/// for it.
pub fn corloc(dets: &[Detection], gts: &[GroundTruth], classes: &[usize]) -> CorlocReport {
    let mut per_class = Vec::new();
    for &c in classes {
        let mut images: BTreeMap<usize, Vec<&BBox>> = BTreeMap::new();
        for g in gts.iter().filter(|g| g.class == c) {
            images.entry(g.image).or_default().push(&g.bbox);
        }
        if images.is_empty() {
            continue;
        }
        let mut top: BTreeMap<usize, &Detection> = BTreeMap::new();
        for d in dets
            .iter()
            .filter(|d| d.class == c && images.contains_key(&d.image))
        {
            match top.get(&d.image) {
                Some(best) if best.score >= d.score => {}
                _ => {
                    top.insert(d.image, d);
                }
            }
        }
        let hits = images
            .iter()
            .filter(|(img, boxes)| {
                top.get(img)
                    .is_some_and(|d| boxes.iter().any(|g| iou(&d.bbox, g) > 0.5))
            })
            .count();
        per_class.push((c, hits as f64 / images.len() as f64, images.len()));
    }
    let average = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64
    };
    CorlocReport { per_class, average }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Fraction of tubelet frames whose argmax class equals the label.
    pub accuracy: f64,
    /// The same restricted to the first frame of every tubelet.
    pub first_frame_accuracy: f64,
    pub n_tubelets: usize,
    pub n_frames: usize,
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy={:.6} first_frame_accuracy={:.6} tubelets={} frames={}",
            self.accuracy, self.first_frame_accuracy, self.n_tubelets, self.n_frames
        )
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = k;
        }
    }
    best
}

/// `distributions[i][t]` is the class distribution of frame `t` of tubelet
/// `i`; argmax ties go to the lower class index.
pub fn classification_accuracy(
    distributions: &[Vec<Vec<f64>>],
    labels: &[Vec<usize>],
) -> Result<ClassificationReport> {
    if distributions.len() != labels.len() {
        return Err(Error::dim(
            "labelled tubelets",
            labels.len(),
            distributions.len(),
        ));
    }
    let (mut correct, mut frames, mut first, mut tubelets) = (0usize, 0usize, 0usize, 0usize);
    for (d, l) in distributions.iter().zip(labels) {
        if d.len() != l.len() {
            return Err(Error::dim("tubelet labels", l.len(), d.len()));
        }
        for (t, (p, &y)) in d.iter().zip(l).enumerate() {
            let hit = argmax(p) == y;
            correct += usize::from(hit);
            frames += 1;
            if t == 0 {
                first += usize::from(hit);
                tubelets += 1;
            }
        }
    }
    if frames == 0 {
        return Err(Error::Invalid(
            "classification accuracy needs at least one frame".into(),
        ));
    }
    Ok(ClassificationReport {
        accuracy: correct as f64 / frames as f64,
        first_frame_accuracy: first as f64 / tubelets as f64,
        n_tubelets: tubelets,
        n_frames: frames,
    })
}

/// Every box of every scored tubelet becomes one detection per object
/// class, scored by that class's probability. Class `k` of the world is
/// score index `k + 1`. Image ids are `image_offset + frame`.
pub fn tubelet_detections(
    tubelets: &[TubeletProposal],
    image_offset: usize,
) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for t in tubelets {
        let scores = t
            .scores
            .as_ref()
            .ok_or_else(|| Error::Invalid("tubelet has no class scores".into()))?;
        if scores.len() != t.boxes.len() {
            return Err(Error::dim("tubelet scores", t.boxes.len(), scores.len()));
        }
        for (k, (b, p)) in t.boxes.iter().zip(scores).enumerate() {
            for (c, &s) in p.iter().enumerate().skip(1) {
                out.push(Detection {
                    image: image_offset + t.anchor_frame + k,
                    class: c - 1,
                    score: s,
                    bbox: *b,
                });
            }
        }
    }
    Ok(out)
}

/// Visible ground-truth boxes of `frames`, with image ids
/// `image_offset + frame`.
pub fn video_ground_truth(
    video: &SyntheticVideo,
    frames: std::ops::Range<usize>,
    image_offset: usize,
) -> Vec<GroundTruth> {
    frames
        .flat_map(|f| {
            video
                .gt_boxes(f)
                .into_iter()
                .map(move |(track, bbox)| GroundTruth {
                    image: image_offset + f,
                    class: video.tracks[track].class_id,
                    bbox,
                })
        })
        .collect()
}
