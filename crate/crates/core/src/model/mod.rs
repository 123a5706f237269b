//! Encoder-decoder attention network: patch-embedding backbone, a
//! self-attention encoder over the stacked previous and current frame, and
//! a decoder over the joint set of object and track queries.

mod config;
mod encoding;
mod layers;
mod network;

use alloc::vec::Vec;

pub use config::ModelConfig;
pub use encoding::spatial_encoding;
pub use network::{Model, PredictionVars};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::Identity;

/// Decoded outputs for every query slot of a frame. Rows `0..N_object`
/// come from object queries, the remaining rows from track queries in the
/// order they were supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    /// Last-decoder-layer embeddings, before the heads.
    pub embeddings: Tensor,
    pub boxes: Vec<BoundingBox>,
    /// `N × (n_classes + 1)`; the last column is background.
    pub class_probs: Tensor,
}

impl FramePrediction {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn background_column(&self) -> usize {
        self.class_probs.cols() - 1
    }

    /// Highest foreground probability of `row`.
    pub fn score(&self, row: usize) -> f64 {
        let bg = self.background_column();
        self.class_probs.row(row)[..bg].iter().copied().fold(0.0, f64::max)
    }
}

/// A track query carried to the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackQuery {
    pub identity: Identity,
    pub embedding: Vec<f64>,
}

/// Turns the embeddings at `accepted` rows into next-frame track queries
/// labelled with `identities`.
pub fn spawn_track_queries(pred: &FramePrediction, accepted: &[usize], identities: &[Identity]) -> Result<Vec<TrackQuery>> {
    if accepted.len() != identities.len() {
        return Err(Error::Input(alloc::format!(
            "{} accepted rows but {} identities",
            accepted.len(),
            identities.len()
        )));
    }
    accepted
        .iter()
        .zip(identities)
        .map(|(&row, &identity)| {
            if row >= pred.len() {
                return Err(Error::Index { index: row, len: pred.len() });
            }
            Ok(TrackQuery {
                identity,
                embedding: pred.embeddings.row(row).to_vec(),
            })
        })
        .collect()
}
