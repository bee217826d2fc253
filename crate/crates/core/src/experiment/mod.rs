//! Experiment configuration, the pipeline stages behind the command-line
//! tool, and the window and classifier ablations.
//!
//! A run is fully determined by an [`ExperimentConfig`] and its seed. Video
//! `i` of the training split is generated with seed `1000 * seed + i`, test
//! video `i` with `1000 * seed + 500 + i`. The `seed` fields nested inside
//! the TPN and classifier sections are replaced by the run seed.

mod gradcheck;
mod pipeline;
mod repro;

pub use gradcheck::{gradient_check_suite, GRAD_CHECK_EPSILON, GRAD_CHECK_TOLERANCE};
pub use pipeline::{
    anchor_frames, anchor_sets, classify_and_evaluate, ideal_pairs, make_dataset, make_videos,
    train_tpn_stage, video_tubelets, ClassifierEvaluation, Split, TpnStage, TubeletPairs,
};
pub use repro::{
    repro_table1, repro_table3, OrderingCheck, Table1Result, Table1Row, Table3Result, Table3Row,
    TABLE1_MODELS,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierTrainConfig;
use crate::eval::ApProtocol;
use crate::synth::{ProposalConfig, WorldConfig};
use crate::tpn::{CorpusConfig, InitMode, TpnTrainConfig};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub world: WorldConfig,
    pub data: DataConfig,
    pub tpn: TpnStageConfig,
    pub tubelet: TubeletConfig,
    pub classifier: ClassifierTrainConfig,
    pub eval: EvalConfig,
    pub repro: ReproConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_videos: usize,
    pub test_videos: usize,
    /// Proposals used as tubelet anchors.
    pub proposals: ProposalConfig,
    pub proposal_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_videos: 8,
            test_videos: 4,
            proposals: ProposalConfig::default(),
            proposal_seed: 99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpnStageConfig {
    /// Sampling of training windows.
    pub corpus: CorpusConfig,
    pub two_frame: TpnTrainConfig,
    /// The model used for tubelets; a window of 2 uses the two-frame model
    /// directly.
    pub multi_frame: TpnTrainConfig,
}

impl Default for TpnStageConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            two_frame: TpnTrainConfig {
                window: 2,
                init: InitMode::Random,
                ..Default::default()
            },
            multi_frame: TpnTrainConfig {
                window: 5,
                init: InitMode::Block,
                epochs: 2,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TubeletConfig {
    pub length: usize,
    /// Frames between anchor frames.
    pub anchor_stride: usize,
}

impl Default for TubeletConfig {
    fn default() -> Self {
        Self {
            length: 20,
            anchor_stride: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Per-image, per-class suppression applied to tubelet boxes before AP.
    pub nms_threshold: f64,
    pub protocol: ApProtocol,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            nms_threshold: 0.3,
            protocol: ApProtocol::AllPoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproConfig {
    /// Consecutive run seeds starting at the run seed.
    pub seeds: usize,
    /// Turns on the temporally ambiguous class pair for the classifier
    /// ablation.
    pub table3_ambiguity: bool,
}

impl Default for ReproConfig {
    fn default() -> Self {
        Self {
            seeds: 5,
            table3_ambiguity: true,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            world: WorldConfig::default(),
            data: DataConfig::default(),
            tpn: TpnStageConfig::default(),
            tubelet: TubeletConfig::default(),
            classifier: ClassifierTrainConfig {
                hidden: 16,
                lr: 0.5,
                iterations: 1500,
                decay_every: 500,
                init_std: 0.1,
                ..Default::default()
            },
            eval: EvalConfig::default(),
            repro: ReproConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.world.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.data.train_videos == 0 || self.data.test_videos == 0 {
            return bad("data.train_videos and data.test_videos must be >= 1");
        }
        if self.tpn.two_frame.window != 2 {
            return bad("tpn.two_frame.window must be 2");
        }
        if self.tpn.multi_frame.window < 2 {
            return bad("tpn.multi_frame.window must be >= 2");
        }
        let t = &self.tubelet;
        if t.length == 0 || t.anchor_stride == 0 || t.length > self.world.frames {
            return bad(
                "tubelet.length must be in 1..=world.frames and tubelet.anchor_stride >= 1",
            );
        }
        let e = &self.eval;
        if !(e.iou_threshold > 0.0
            && e.iou_threshold <= 1.0
            && e.nms_threshold > 0.0
            && e.nms_threshold <= 1.0)
        {
            return bad("eval thresholds must be in (0, 1]");
        }
        if self.repro.seeds == 0 {
            return bad("repro.seeds must be >= 1");
        }
        if self.world.num_classes < 2 && self.repro.table3_ambiguity {
            return bad("the ambiguous class pair needs world.num_classes >= 2");
        }
        Ok(())
    }

    /// The configuration with its seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Stage configurations with the run seed filled in.
    pub fn two_frame_config(&self) -> TpnTrainConfig {
        TpnTrainConfig {
            seed: self.seed,
            ..self.tpn.two_frame.clone()
        }
    }

    pub fn multi_frame_config(&self) -> TpnTrainConfig {
        TpnTrainConfig {
            seed: self.seed,
            ..self.tpn.multi_frame.clone()
        }
    }

    pub fn classifier_config(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            seed: self.seed,
            ..self.classifier.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(
            ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(),
            cfg
        );
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "schema_version = 1\nseed = 7\n[tubelet]\nlength = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.tubelet.length, 10);
        assert_eq!(cfg.tubelet.anchor_stride, 20);
        assert_eq!(cfg.world, WorldConfig::default());
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(ExperimentConfig::from_toml_str("schema_version = 1\nsede = 7\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[world]\nframez = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("schema_version = 2\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[tubelet]\nlength = 0\n").is_err());
    }

    #[test]
    fn run_seed_overrides_stage_seeds() {
        let cfg = ExperimentConfig::default().with_seed(42);
        assert_eq!(cfg.two_frame_config().seed, 42);
        assert_eq!(cfg.multi_frame_config().seed, 42);
        assert_eq!(cfg.classifier_config().seed, 42);
    }
}
