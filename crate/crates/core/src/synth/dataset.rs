use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ObjectTrack, SyntheticVideo, WorldConfig};
use crate::geometry::BBox;
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "tpnkit-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameProposals {
    pub frame: usize,
    pub boxes: Vec<BBox>,
}

/// One video with its static proposals, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub video: SyntheticVideo,
    pub proposal_seed: u64,
    pub proposals: Vec<FrameProposals>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: String,
    version: u32,
    seed: u64,
    proposal_seed: u64,
    config: WorldConfig,
    tracks: Vec<ObjectTrack>,
    proposals: Vec<FrameProposals>,
}

impl Dataset {
    pub fn proposals_on(&self, frame: usize) -> Option<&[BBox]> {
        self.proposals
            .iter()
            .find(|p| p.frame == frame)
            .map(|p| p.boxes.as_slice())
    }

    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            seed: self.video.seed,
            proposal_seed: self.proposal_seed,
            config: self.video.config.clone(),
            tracks: self.video.tracks.clone(),
            proposals: self.proposals.clone(),
        };
        serde_json::to_string_pretty(&file).expect("dataset serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if file.format != DATASET_FORMAT {
            return Err(Error::format(
                origin,
                format!("unexpected format tag `{}`", file.format),
            ));
        }
        if file.version != DATASET_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported version {}", file.version),
            ));
        }
        let video = SyntheticVideo::from_parts(file.config, file.seed, file.tracks)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(Self {
            video,
            proposal_seed: file.proposal_seed,
            proposals: file.proposals,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_video, static_proposals, ProposalConfig};

    #[test]
    fn round_trips_bit_exactly() {
        let cfg = WorldConfig {
            occlusion_prob: 0.3,
            ..WorldConfig::default()
        };
        let video = generate_video(&cfg, 31).unwrap();
        let proposals = (0..cfg.frames)
            .step_by(20)
            .map(|t| FrameProposals {
                frame: t,
                boxes: static_proposals(&video, t, &ProposalConfig::default(), 7),
            })
            .collect();
        let ds = Dataset {
            video,
            proposal_seed: 7,
            proposals,
        };
        let text = ds.to_json();
        let back = Dataset::from_json(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_json(), text);
        // the derived oracle is rebuilt identically
        let b = ds.video.tracks[0].boxes[0];
        assert_eq!(
            ds.video.pool_regression_features(&b, 0),
            back.video.pool_regression_features(&b, 0)
        );
    }

    #[test]
    fn rejects_unknown_fields_and_degenerate_boxes() {
        let video = generate_video(&WorldConfig::default(), 1).unwrap();
        let ds = Dataset {
            video,
            proposal_seed: 0,
            proposals: vec![],
        };
        let text = ds.to_json();
        let extra = text.replacen('{', "{\n  \"surprise\": 1,", 1);
        assert!(Dataset::from_json(&extra, Path::new("x")).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tracks"][0]["boxes"][0][2] = serde_json::json!(-3.0);
        assert!(Dataset::from_json(&v.to_string(), Path::new("x")).is_err());
    }
}
