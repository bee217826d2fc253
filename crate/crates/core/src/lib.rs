//! Tubelet proposal toolkit.
//!
//! Generates object tubelets in video by regressing box movements from
//! static spatial anchors, classifies them with recurrent models, and scores
//! them with tubelet and detection metrics. Everything runs on synthetic
//! video worlds whose feature oracle stands in for a CNN backbone, so the
//! whole pipeline is deterministic and checkable.
//!
//! Module map:
//!
//! * [`geometry`]: boxes, IoU, and the movement codec.
//! * [`nn`]: dense layer, LSTM cell, losses, SGD with momentum, gradient
//!   checking and checkpoints.
//! * [`synth`]: synthetic videos, static proposals and the feature oracle.
//! * [`tpn`]: anchor matching, movement targets, the multi-frame regression
//!   layer with block initialization, and its training loop.
//! * [`tubelet`]: chained tubelet generation and the tubelet table format.
//! * [`classifier`]: per-frame, vanilla LSTM and encoder-decoder LSTM
//!   tubelet classifiers.
//! * [`eval`]: MAD / MRD / mean IoU, average precision and CorLoc.
//! * [`experiment`]: configuration, the pipeline stages, and the window /
//!   classifier ablations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod nn;
pub mod synth;
pub mod tpn;
pub mod tubelet;

#[cfg(test)]
mod oracles;

pub use error::{Error, Result};
pub use geometry::{BBox, DeltaKind, MovementDelta};
