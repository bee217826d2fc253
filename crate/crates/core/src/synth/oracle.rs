use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{hash_words, rng_for, ObjectTrack, SyntheticVideo, WorldConfig};
use crate::geometry::{iou, BBox};
use crate::nn::Matrix;

const STREAM_REGRESSION: u64 = 0xA11;
const STREAM_CLASSIFICATION: u64 = 0xC1A;

#[derive(Debug, Clone)]
struct TrackCode {
    appearance: Vec<f64>,
    /// Starting level of the phase channel, in `0..period`.
    phase_offset: i64,
    /// `+1` or `-1`: direction the phase channel cycles in.
    phase_step: i64,
}

/// Fixed random embeddings that turn object geometry and identity into
/// feature vectors.
///
/// Regression code (before projection): `[appearance | geometry | 1]` for an
/// object within the receptive radius, `[background | 0 0 0 0 | 0]` otherwise.
/// The geometry part is `gain * ((gx-x)/w, (gy-y)/h, ln(gw/w), ln(gh/h))`,
/// so movement targets are linear in it.
///
/// Classification code: `[s * onehot(direction) | 1 - s | s * phase]` where
/// `s` is the IoU with the best-overlapping object.
#[derive(Debug, Clone)]
pub struct FeatureOracle {
    feature_dim: usize,
    appearance_dim: usize,
    class_dim: usize,
    noise_std: f64,
    radius: f64,
    gain: f64,
    period: i64,
    video_seed: u64,
    reg_projection: Matrix,
    cls_projection: Matrix,
    background: Vec<f64>,
    class_direction: Vec<usize>,
    tracks: Vec<TrackCode>,
    track_classes: Vec<usize>,
}

impl FeatureOracle {
    pub(crate) fn new(config: &WorldConfig, video_seed: u64, tracks: &[ObjectTrack]) -> Self {
        let p = &config.oracle;
        let a = p.appearance_dim;
        let reg_dim = a + 5;
        let cls_dim = p.class_signal_dim + 2;

        let mut rng = rng_for(p.projection_seed, 1);
        let reg_projection = Matrix::gaussian(
            reg_dim,
            p.feature_dim,
            1.0 / (reg_dim as f64).sqrt(),
            &mut rng,
        );
        let cls_projection = Matrix::gaussian(
            cls_dim,
            p.feature_dim,
            1.0 / (cls_dim as f64).sqrt(),
            &mut rng,
        );
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let background = (0..a).map(|_| unit.sample(&mut rng)).collect();

        let c = config.num_classes;
        let ambiguous = p.temporal_ambiguity;
        let class_direction = (0..c)
            .map(|k| if ambiguous && k == c - 1 { c - 2 } else { k })
            .collect();

        let period = p.phase_period as i64;
        let codes = tracks
            .iter()
            .map(|t| {
                let mut r = rng_for(t.appearance_seed, 1);
                let appearance = (0..a).map(|_| unit.sample(&mut r)).collect();
                let phase_offset = r.random_range(0..period);
                let random_step = if r.random_bool(0.5) { 1 } else { -1 };
                let phase_step = match (ambiguous, t.class_id) {
                    (true, k) if k == c - 2 => 1,
                    (true, k) if k == c - 1 => -1,
                    _ => random_step,
                };
                TrackCode {
                    appearance,
                    phase_offset,
                    phase_step,
                }
            })
            .collect();

        Self {
            feature_dim: p.feature_dim,
            appearance_dim: a,
            class_dim: p.class_signal_dim,
            noise_std: p.noise_std,
            radius: p.receptive_radius,
            gain: p.geometry_gain,
            period,
            video_seed,
            reg_projection,
            cls_projection,
            background,
            class_direction,
            tracks: codes,
            track_classes: tracks.iter().map(|t| t.class_id).collect(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn receptive_radius(&self) -> f64 {
        self.radius
    }

    /// Phase-channel value of `track` on `frame`, in `[-1, 1)`.
    pub fn phase(&self, track: usize, frame: usize) -> f64 {
        let code = &self.tracks[track];
        let level = (code.phase_offset + code.phase_step * frame as i64).rem_euclid(self.period);
        2.0 * level as f64 / self.period as f64 - 1.0
    }

    pub fn class_direction(&self, class_id: usize) -> usize {
        self.class_direction[class_id]
    }

    /// Pre-projection regression code for `bbox` relative to object `g`.
    pub fn regression_code(&self, target: Option<(usize, &BBox)>, bbox: &BBox) -> Vec<f64> {
        let a = self.appearance_dim;
        let mut code = vec![0.0; a + 5];
        match target {
            Some((k, g)) => {
                code[..a].copy_from_slice(&self.tracks[k].appearance);
                code[a] = self.gain * (g.x() - bbox.x()) / bbox.w();
                code[a + 1] = self.gain * (g.y() - bbox.y()) / bbox.h();
                code[a + 2] = self.gain * (g.w() / bbox.w()).ln();
                code[a + 3] = self.gain * (g.h() / bbox.h()).ln();
                code[a + 4] = 1.0;
            }
            None => code[..a].copy_from_slice(&self.background),
        }
        code
    }

    pub fn classification_code(&self, target: Option<(usize, f64)>, frame: usize) -> Vec<f64> {
        let d = self.class_dim;
        let mut code = vec![0.0; d + 2];
        match target {
            Some((k, s)) if s > 0.0 => {
                code[self.class_direction[self.track_classes[k]]] = s;
                code[d] = 1.0 - s;
                code[d + 1] = s * self.phase(k, frame);
            }
            _ => code[d] = 1.0,
        }
        code
    }

    pub fn project_regression(&self, code: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        self.reg_projection.accumulate_xt_m(code, &mut out);
        out
    }

    pub fn project_classification(&self, code: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        self.cls_projection.accumulate_xt_m(code, &mut out);
        out
    }

    fn add_noise(&self, feature: &mut [f64], frame: usize, bbox: &BBox, stream: u64) {
        if self.noise_std == 0.0 {
            return;
        }
        let q = |v: f64| (v * 4.0).round() as i64 as u64;
        let seed = hash_words(&[
            self.video_seed,
            stream,
            frame as u64,
            q(bbox.x()),
            q(bbox.y()),
            q(bbox.w()),
            q(bbox.h()),
        ]);
        let mut rng = rng_for(seed, stream);
        let normal = Normal::new(0.0, self.noise_std).expect("noise std is finite");
        for v in feature {
            *v += normal.sample(&mut rng);
        }
    }
}

/// The ground truth visible on one frame, resolved once and reused for every
/// box pooled on that frame.
#[derive(Debug, Clone)]
pub struct FrameContext<'v> {
    oracle: &'v FeatureOracle,
    frame: usize,
    objects: Vec<(usize, BBox)>,
}

impl<'v> FrameContext<'v> {
    pub(crate) fn new(video: &'v SyntheticVideo, frame: usize) -> Self {
        Self {
            oracle: video.oracle(),
            frame,
            objects: video.gt_boxes(frame),
        }
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Nearest visible object whose center is within the receptive radius;
    /// ties go to the lower track index.
    pub fn nearest_object(&self, bbox: &BBox) -> Option<(usize, BBox)> {
        let mut best: Option<(f64, usize, BBox)> = None;
        for &(k, g) in &self.objects {
            let d = g.center_distance(bbox);
            if d > self.oracle.radius {
                continue;
            }
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, k, g));
            }
        }
        best.map(|(_, k, g)| (k, g))
    }

    /// Highest-IoU object within the receptive radius, with its IoU.
    pub fn best_overlap(&self, bbox: &BBox) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for &(k, g) in &self.objects {
            if g.center_distance(bbox) > self.oracle.radius {
                continue;
            }
            let o = iou(bbox, &g);
            if o > 0.0 && best.is_none_or(|(_, bo)| o > bo) {
                best = Some((k, o));
            }
        }
        best
    }

    pub fn regression(&self, bbox: &BBox) -> Vec<f64> {
        let target = self.nearest_object(bbox);
        let code = self
            .oracle
            .regression_code(target.as_ref().map(|(k, g)| (*k, g)), bbox);
        let mut f = self.oracle.project_regression(&code);
        self.oracle
            .add_noise(&mut f, self.frame, bbox, STREAM_REGRESSION);
        f
    }

    pub fn classification(&self, bbox: &BBox) -> Vec<f64> {
        let code = self
            .oracle
            .classification_code(self.best_overlap(bbox), self.frame);
        let mut f = self.oracle.project_classification(&code);
        self.oracle
            .add_noise(&mut f, self.frame, bbox, STREAM_CLASSIFICATION);
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::encode_movement;
    use crate::synth::{generate_video, MotionProgram, WorldConfig};

    fn noiseless(cfg: &mut WorldConfig) {
        cfg.oracle.noise_std = 0.0;
    }

    fn track(
        class_id: usize,
        seed: u64,
        start: [f64; 4],
        velocity: [f64; 2],
        frames: usize,
    ) -> ObjectTrack {
        let motion = MotionProgram::Linear { velocity };
        ObjectTrack {
            class_id,
            boxes: motion.boxes(start, frames, 480.0, 270.0, 4.0),
            visible: vec![true; frames],
            appearance_seed: seed,
            motion,
        }
    }

    #[test]
    fn far_boxes_see_background() {
        let cfg = WorldConfig::default();
        let v = SyntheticVideo::from_parts(
            cfg.clone(),
            5,
            vec![track(
                0,
                1,
                [60.0, 60.0, 40.0, 40.0],
                [0.0, 0.0],
                cfg.frames,
            )],
        )
        .unwrap();
        let far = BBox::new(400.0, 200.0, 40.0, 40.0).unwrap();
        let f = v.pool_regression_features(&far, 3);
        let code = v.oracle().regression_code(None, &far);
        let bg = v.oracle().project_regression(&code);
        let tol = 3.0 * cfg.oracle.noise_std;
        // per-coordinate noise is N(0, std); 3 std covers this fixed seed
        assert!(f.iter().zip(&bg).all(|(a, b)| (a - b).abs() < tol));

        let c = v.pool_classification_features(&far, 3);
        let bgc = v
            .oracle()
            .project_classification(&v.oracle().classification_code(None, 3));
        assert!(c.iter().zip(&bgc).all(|(a, b)| (a - b).abs() < tol));
    }

    #[test]
    fn gt_box_has_zero_geometry_code() {
        let mut cfg = WorldConfig::default();
        noiseless(&mut cfg);
        let v = generate_video(&cfg, 8).unwrap();
        let g = v.tracks[0].boxes[4];
        let ctx = v.frame_context(4);
        let (k, found) = ctx.nearest_object(&g).unwrap();
        assert_eq!(found, g);
        let code = v.oracle().regression_code(Some((k, &found)), &g);
        let a = cfg.oracle.appearance_dim;
        assert_eq!(&code[a..a + 4], &[0.0; 4]);
    }

    #[test]
    fn features_ignore_objects_outside_radius() {
        let cfg = WorldConfig::default();
        let frames = cfg.frames;
        let near = track(1, 11, [100.0, 100.0, 40.0, 40.0], [1.0, 0.0], frames);
        let far_a = track(2, 12, [420.0, 220.0, 40.0, 40.0], [0.0, 0.0], frames);
        let far_b = track(2, 12, [380.0, 200.0, 50.0, 30.0], [-1.0, 0.5], frames);
        let va = SyntheticVideo::from_parts(cfg.clone(), 3, vec![near.clone(), far_a]).unwrap();
        let vb = SyntheticVideo::from_parts(cfg, 3, vec![near, far_b]).unwrap();
        let probe = BBox::new(110.0, 95.0, 45.0, 38.0).unwrap();
        for t in [0, 7, 19] {
            assert_eq!(
                va.pool_regression_features(&probe, t),
                vb.pool_regression_features(&probe, t)
            );
            assert_eq!(
                va.pool_classification_features(&probe, t),
                vb.pool_classification_features(&probe, t)
            );
        }
    }

    #[test]
    fn ambiguous_pair_is_identical_on_a_single_frame() {
        let mut cfg = WorldConfig::default();
        noiseless(&mut cfg);
        cfg.oracle.temporal_ambiguity = true;
        let frames = cfg.frames;
        let start = [200.0, 120.0, 50.0, 50.0];
        // search for a pair of tracks and a frame where the rising and falling
        // members sit on the same phase level
        let va =
            SyntheticVideo::from_parts(cfg.clone(), 1, vec![track(2, 21, start, [0.0; 2], frames)])
                .unwrap();
        let (vb, frame) = (22..200)
            .find_map(|seed| {
                let vb = SyntheticVideo::from_parts(
                    cfg.clone(),
                    1,
                    vec![track(3, seed, start, [0.0; 2], frames)],
                )
                .unwrap();
                let t =
                    (0..frames).find(|&t| va.oracle().phase(0, t) == vb.oracle().phase(0, t))?;
                Some((vb, t))
            })
            .expect("half of all offset pairs coincide");
        let bx = BBox::new(200.0, 120.0, 50.0, 50.0).unwrap();
        assert_eq!(
            va.pool_classification_features(&bx, frame),
            vb.pool_classification_features(&bx, frame)
        );
    }

    #[test]
    fn ambiguous_phase_patterns_differ_on_half_a_period() {
        // enumerate every pair of starting levels for the rising and falling codes
        for period in [4i64, 6, 8, 12] {
            for a0 in 0..period {
                for b0 in 0..period {
                    let differ = (0..period)
                        .filter(|&t| (a0 + t).rem_euclid(period) != (b0 - t).rem_euclid(period))
                        .count() as i64;
                    assert!(2 * differ >= period, "period {period} a0 {a0} b0 {b0}");
                }
            }
        }
    }

    #[test]
    fn movement_targets_are_linear_in_features() {
        // least squares on noiseless (feature, target) pairs with anchor = GT
        let mut cfg = WorldConfig::default();
        noiseless(&mut cfg);
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<Vec<f64>> = Vec::new();
        let mut seed = 0;
        while xs.len() < 500 {
            let v = generate_video(&cfg, 1000 + seed).unwrap();
            seed += 1;
            for (k, t) in v.tracks.iter().enumerate() {
                for s in (0..cfg.frames - 1).step_by(3) {
                    let a = t.boxes[s];
                    let g = t.boxes[s + 1];
                    let ctx0 = v.frame_context(s);
                    let ctx1 = v.frame_context(s + 1);
                    if ctx0.nearest_object(&a).map(|o| o.0) != Some(k)
                        || ctx1.nearest_object(&a).map(|o| o.0) != Some(k)
                    {
                        continue;
                    }
                    let mut x = ctx0.regression(&a);
                    x.extend(ctx1.regression(&a));
                    x.push(1.0);
                    xs.push(x);
                    ys.push(encode_movement(&a, &g).to_array().to_vec());
                }
            }
        }
        xs.truncate(500);
        ys.truncate(500);
        let max_resid = crate::oracles::least_squares(&xs, &ys).max_abs_residual();
        assert!(max_resid < 1e-8, "residual {max_resid}");
    }
}
