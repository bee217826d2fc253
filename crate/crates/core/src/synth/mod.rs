//! Synthetic video worlds.
//!
//! A video is a set of ground-truth object tracks driven by motion programs,
//! plus a deterministic feature oracle that plays the part of ROI-pooled CNN
//! features. Nothing is rasterized: the world is boxes and feature vectors.

mod dataset;
mod motion;
mod oracle;
mod proposals;

pub use dataset::{Dataset, FrameProposals, DATASET_FORMAT, DATASET_VERSION};
pub use motion::{MotionKind, MotionProgram};
pub use oracle::{FeatureOracle, FrameContext};
pub use proposals::{proposal_recall, static_proposals, ProposalConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::{Error, Result};

/// Parameters of the feature oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOracleParams {
    pub feature_dim: usize,
    pub projection_seed: u64,
    pub noise_std: f64,
    /// Objects whose center is farther than this from a pooled box are
    /// invisible to it.
    pub receptive_radius: f64,
    /// Number of class-code directions in classification features.
    pub class_signal_dim: usize,
    /// Makes the last two classes share their per-frame code so that only
    /// the temporal pattern of the phase channel tells them apart.
    pub temporal_ambiguity: bool,
    pub appearance_dim: usize,
    /// Multiplier on the relative-geometry code before projection.
    pub geometry_gain: f64,
    /// Period, in frames, of the phase channel.
    pub phase_period: usize,
}

impl Default for FeatureOracleParams {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            projection_seed: 0x5EED_F00D,
            noise_std: 0.05,
            receptive_radius: 90.0,
            class_signal_dim: 4,
            temporal_ambiguity: false,
            appearance_dim: 8,
            geometry_gain: 4.0,
            phase_period: 8,
        }
    }
}

impl FeatureOracleParams {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.feature_dim < 8 {
            return Err(Error::Config(format!(
                "feature_dim must be >= 8, got {}",
                self.feature_dim
            )));
        }
        if !(self.receptive_radius > 0.0) {
            return Err(Error::Config("receptive_radius must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be finite and >= 0".into()));
        }
        if self.appearance_dim == 0 || self.appearance_dim + 5 > self.feature_dim {
            return Err(Error::Config(format!(
                "appearance_dim + 5 must fit in feature_dim ({} + 5 > {})",
                self.appearance_dim, self.feature_dim
            )));
        }
        let needed = num_classes - usize::from(self.temporal_ambiguity && num_classes >= 2);
        if self.class_signal_dim < needed {
            return Err(Error::Config(format!(
                "class_signal_dim {} cannot separate {} class codes",
                self.class_signal_dim, needed
            )));
        }
        if self.class_signal_dim + 2 > self.feature_dim {
            return Err(Error::Config(
                "class_signal_dim + 2 must fit in feature_dim".into(),
            ));
        }
        if self.phase_period < 4 || !self.phase_period.is_multiple_of(2) {
            return Err(Error::Config("phase_period must be even and >= 4".into()));
        }
        if !(self.geometry_gain > 0.0) {
            return Err(Error::Config("geometry_gain must be positive".into()));
        }
        Ok(())
    }
}

/// Sampling ranges for motion programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Relative weights of linear, sinusoidal, scale-change and random-walk.
    pub mix: [f64; 4],
    pub speed: [f64; 2],
    pub amplitude: [f64; 2],
    pub period: [f64; 2],
    pub scale_rate: [f64; 2],
    pub walk_std: f64,
    pub walk_segment: usize,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            mix: [0.3, 0.25, 0.2, 0.25],
            speed: [0.5, 7.0],
            amplitude: [4.0, 16.0],
            period: [16.0, 40.0],
            scale_rate: [1.002, 1.012],
            walk_std: 0.8,
            walk_segment: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    pub frames: usize,
    pub num_classes: usize,
    pub tracks_per_video: usize,
    /// Range of initial object widths, px.
    pub object_size: [f64; 2],
    pub aspect: [f64; 2],
    pub min_size: f64,
    /// Probability that a track has one contiguous invisible stretch.
    pub occlusion_prob: f64,
    pub motion: MotionConfig,
    pub oracle: FeatureOracleParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 480.0,
            height: 270.0,
            frames: 60,
            num_classes: 4,
            tracks_per_video: 3,
            object_size: [36.0, 84.0],
            aspect: [0.6, 1.4],
            min_size: 4.0,
            occlusion_prob: 0.0,
            motion: MotionConfig::default(),
            oracle: FeatureOracleParams::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tracks_per_video == 0 {
            return Err(Error::Config("need at least one track per video".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.frames < 2 {
            return Err(Error::Config(
                "video length must be at least 2 frames".into(),
            ));
        }
        let [lo, hi] = self.object_size;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(
                "object_size must be an increasing positive range".into(),
            ));
        }
        let max_h = hi * self.aspect[1];
        if hi >= self.width || max_h >= self.height {
            return Err(Error::Config(format!(
                "objects up to {hi} x {max_h} px do not fit a {} x {} frame",
                self.width, self.height
            )));
        }
        if !(self.aspect[0] > 0.0 && self.aspect[0] <= self.aspect[1]) {
            return Err(Error::Config(
                "aspect must be an increasing positive range".into(),
            ));
        }
        if self.motion.mix.iter().any(|&w| w < 0.0) || self.motion.mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(
                "motion mix weights must be >= 0 with a positive sum".into(),
            ));
        }
        for (name, r) in [
            ("speed", self.motion.speed),
            ("amplitude", self.motion.amplitude),
            ("period", self.motion.period),
            ("scale_rate", self.motion.scale_rate),
        ] {
            if !(r[0] <= r[1]) || r[0] < 0.0 {
                return Err(Error::Config(format!(
                    "motion.{name} must be an increasing range >= 0"
                )));
            }
        }
        if self.motion.period[0] <= 0.0 || self.motion.scale_rate[0] <= 0.0 {
            return Err(Error::Config(
                "motion period and scale rate must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::Config("occlusion_prob must lie in [0, 1]".into()));
        }
        self.oracle.validate(self.num_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub class_id: usize,
    pub boxes: Vec<BBox>,
    pub visible: Vec<bool>,
    pub appearance_seed: u64,
    pub motion: MotionProgram,
}

impl ObjectTrack {
    pub fn box_at(&self, frame: usize) -> Option<BBox> {
        match self.visible.get(frame) {
            Some(true) => Some(self.boxes[frame]),
            _ => None,
        }
    }

    pub fn visible_on(&self, frames: std::ops::Range<usize>) -> bool {
        frames
            .into_iter()
            .all(|t| self.visible.get(t).copied().unwrap_or(false))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub config: WorldConfig,
    pub seed: u64,
    pub tracks: Vec<ObjectTrack>,
    oracle: FeatureOracle,
}

impl PartialEq for SyntheticVideo {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.seed == other.seed && self.tracks == other.tracks
    }
}

impl SyntheticVideo {
    /// Rebuilds a video from stored parts; the oracle is derived, not stored.
    pub fn from_parts(config: WorldConfig, seed: u64, tracks: Vec<ObjectTrack>) -> Result<Self> {
        config.validate()?;
        for (k, t) in tracks.iter().enumerate() {
            if t.boxes.len() != config.frames || t.visible.len() != config.frames {
                return Err(Error::Invalid(format!(
                    "track {k} does not cover the video length"
                )));
            }
            if t.class_id >= config.num_classes {
                return Err(Error::Invalid(format!(
                    "track {k} has class {} out of range",
                    t.class_id
                )));
            }
            if !t.visible.iter().any(|&v| v) {
                return Err(Error::Invalid(format!("track {k} is never visible")));
            }
        }
        let oracle = FeatureOracle::new(&config, seed, &tracks);
        Ok(Self {
            config,
            seed,
            tracks,
            oracle,
        })
    }

    pub fn frames(&self) -> usize {
        self.config.frames
    }

    pub fn width(&self) -> f64 {
        self.config.width
    }

    pub fn height(&self) -> f64 {
        self.config.height
    }

    pub fn oracle(&self) -> &FeatureOracle {
        &self.oracle
    }

    /// Visible ground-truth boxes on `frame`, with their track index.
    pub fn gt_boxes(&self, frame: usize) -> Vec<(usize, BBox)> {
        self.tracks
            .iter()
            .enumerate()
            .filter_map(|(k, t)| t.box_at(frame).map(|b| (k, b)))
            .collect()
    }

    pub fn frame_context(&self, frame: usize) -> FrameContext<'_> {
        FrameContext::new(self, frame)
    }

    /// Regression feature of `bbox` on `frame`.
    pub fn pool_regression_features(&self, bbox: &BBox, frame: usize) -> Vec<f64> {
        self.frame_context(frame).regression(bbox)
    }

    /// Classification feature of `bbox` on `frame`.
    pub fn pool_classification_features(&self, bbox: &BBox, frame: usize) -> Vec<f64> {
        self.frame_context(frame).classification(bbox)
    }
}

/// Generates one video. Pure in `(config, seed)`.
pub fn generate_video(config: &WorldConfig, seed: u64) -> Result<SyntheticVideo> {
    config.validate()?;
    let mut rng = rng_for(seed, 0x71DE0);
    let kinds = [
        MotionKind::Linear,
        MotionKind::Sinusoidal,
        MotionKind::ScaleChange,
        MotionKind::RandomWalk,
    ];
    let mix_total: f64 = config.motion.mix.iter().sum();

    let mut tracks = Vec::with_capacity(config.tracks_per_video);
    for _ in 0..config.tracks_per_video {
        let class_id = rng.random_range(0..config.num_classes);
        let w = rng.random_range(config.object_size[0]..=config.object_size[1]);
        let h = w * rng.random_range(config.aspect[0]..=config.aspect[1]);
        let x = rng.random_range(w / 2.0..=config.width - w / 2.0);
        let y = rng.random_range(h / 2.0..=config.height - h / 2.0);

        let mut pick = rng.random_range(0.0..mix_total);
        let mut kind = kinds[3];
        for (k, &wt) in kinds.iter().zip(&config.motion.mix) {
            if pick < wt {
                kind = *k;
                break;
            }
            pick -= wt;
        }
        let motion = motion::sample_program(kind, &config.motion, &mut rng);
        let boxes = motion.boxes(
            [x, y, w, h],
            config.frames,
            config.width,
            config.height,
            config.min_size,
        );

        let mut visible = vec![true; config.frames];
        if config.frames > 2 && rng.random_bool(config.occlusion_prob) {
            let len = rng.random_range(1..=(config.frames / 4).max(1));
            let start = rng.random_range(1..config.frames.saturating_sub(len).max(2));
            for v in visible.iter_mut().skip(start).take(len) {
                *v = false;
            }
        }
        tracks.push(ObjectTrack {
            class_id,
            boxes,
            visible,
            appearance_seed: rng.random(),
            motion,
        });
    }
    SyntheticVideo::from_parts(config.clone(), seed, tracks)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &w| mix64(acc ^ w))
}

/// Deterministic RNG for a `(seed, stream)` pair.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_words(&[seed, stream]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_video() {
        let cfg = WorldConfig::default();
        let a = generate_video(&cfg, 42).unwrap();
        let b = generate_video(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_video(&cfg, 43).unwrap();
        assert_ne!(a, c);
        let bx = a.tracks[0].boxes[5];
        let fa = a.pool_regression_features(&bx, 5);
        let fb = b.pool_regression_features(&bx, 5);
        assert_eq!(
            fa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            fb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let cfg = WorldConfig {
            object_size: [100.0, 500.0],
            ..WorldConfig::default()
        };
        assert!(generate_video(&cfg, 1).is_err());
        let cfg = WorldConfig {
            num_classes: 1,
            ..WorldConfig::default()
        };
        assert!(generate_video(&cfg, 1).is_err());
        let cfg = WorldConfig {
            tracks_per_video: 0,
            ..WorldConfig::default()
        };
        assert!(generate_video(&cfg, 1).is_err());
        let cfg = WorldConfig {
            frames: 1,
            ..WorldConfig::default()
        };
        assert!(generate_video(&cfg, 1).is_err());
    }

    #[test]
    fn tracks_are_valid_and_in_frame() {
        let cfg = WorldConfig {
            occlusion_prob: 0.5,
            tracks_per_video: 6,
            ..WorldConfig::default()
        };
        for seed in 0..20 {
            let v = generate_video(&cfg, seed).unwrap();
            for t in &v.tracks {
                assert!(t.visible.iter().any(|&x| x));
                for b in &t.boxes {
                    let [x1, y1, x2, y2] = b.corners();
                    assert!(x1 >= -1e-9 && y1 >= -1e-9 && x2 <= 480.0 + 1e-9 && y2 <= 270.0 + 1e-9);
                    assert!(b.w() >= 4.0 && b.h() >= 4.0);
                }
            }
        }
    }
}
