//! Inference-time track lifecycle.
//!
//! Every frame decodes object queries together with the queries of all
//! active and inactive tracks. Active tracks survive while their score
//! stays at or above `sigma_track`; below that they become inactive and
//! are still decoded for a patience window of `t_track_reid` frames, during
//! which a score of at least `sigma_track_reid` brings them back under the
//! same identity. Object queries scoring at least `sigma_object` start new
//! tracks, optionally licensed by public detections. NMS runs over the
//! surviving tracks first and then over new initializations.

mod filter;
mod greedy;
mod nms;

use alloc::vec::Vec;

pub use filter::{filter_initializations, FilterMode};
pub use greedy::{GreedyCenterTracker, GreedyConfig};
pub use nms::{nms, nms_against, NmsEntry};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{FramePrediction, Model, TrackQuery};
use crate::Identity;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub sigma_object: f64,
    pub sigma_track: f64,
    pub sigma_nms: f64,
    pub t_track_reid: usize,
    pub sigma_track_reid: f64,
    /// When off, tracks are deleted as soon as they would turn inactive.
    pub reid: bool,
    pub filter_mode: FilterMode,
    pub filter_iou_threshold: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            sigma_object: 0.4,
            sigma_track: 0.4,
            sigma_nms: 0.9,
            t_track_reid: 5,
            sigma_track_reid: 0.4,
            reid: true,
            filter_mode: FilterMode::None,
            filter_iou_threshold: 0.5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let t = [
            self.sigma_object,
            self.sigma_track,
            self.sigma_nms,
            self.sigma_track_reid,
            self.filter_iou_threshold,
        ];
        if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("tracker thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    /// Frames since deactivation; never exceeds `t_track_reid`.
    Inactive { age: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub identity: Identity,
    pub query: Vec<f64>,
    /// Last box emitted while active.
    pub bbox: BoundingBox,
    pub score: f64,
    pub status: TrackStatus,
}

impl TrackState {
    pub fn is_active(&self) -> bool {
        self.status == TrackStatus::Active
    }
}

/// A box reported for the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub identity: Identity,
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Produces predictions for object queries plus the supplied track
/// queries, in that row order.
pub trait QueryDecoder {
    fn decode(&mut self, prev: &Image, curr: &Image, tracks: &[TrackQuery]) -> Result<FramePrediction>;
}

impl QueryDecoder for &Model {
    fn decode(&mut self, prev: &Image, curr: &Image, tracks: &[TrackQuery]) -> Result<FramePrediction> {
        self.predict(prev, curr, tracks)
    }
}

/// Track lifecycle state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<TrackState>,
    next_identity: Identity,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_identity: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Decodes the frame pair with the current track queries and advances
    /// the lifecycle. At the first frame pass the same image twice.
    pub fn step<D: QueryDecoder>(
        &mut self,
        decoder: &mut D,
        prev: &Image,
        curr: &Image,
        public_dets: Option<&[BoundingBox]>,
    ) -> Result<Vec<TrackOutput>> {
        let queries: Vec<TrackQuery> = self
            .tracks
            .iter()
            .map(|t| TrackQuery {
                identity: t.identity,
                embedding: t.query.clone(),
            })
            .collect();
        let pred = decoder.decode(prev, curr, &queries)?;
        self.update(&pred, public_dets)
    }

    /// Advances the lifecycle from a prediction whose trailing rows belong
    /// to the current tracks, in order.
    pub fn update(&mut self, pred: &FramePrediction, public_dets: Option<&[BoundingBox]>) -> Result<Vec<TrackOutput>> {
        let n_tracks = self.tracks.len();
        if pred.len() < n_tracks {
            return Err(Error::Input("prediction has fewer rows than tracks".into()));
        }
        let n_obj = pred.len() - n_tracks;
        let cfg = self.cfg;

        let mut survivors = Vec::with_capacity(n_tracks);
        for (k, mut t) in core::mem::take(&mut self.tracks).into_iter().enumerate() {
            let row = n_obj + k;
            let score = pred.score(row);
            t.query = pred.embeddings.row(row).to_vec();
            t.score = score;
            match t.status {
                TrackStatus::Active if score >= cfg.sigma_track => t.bbox = pred.boxes[row],
                TrackStatus::Active => {
                    if !cfg.reid {
                        continue;
                    }
                    t.status = TrackStatus::Inactive { age: 0 };
                }
                TrackStatus::Inactive { .. } if score >= cfg.sigma_track_reid => {
                    t.status = TrackStatus::Active;
                    t.bbox = pred.boxes[row];
                }
                TrackStatus::Inactive { age } => {
                    if age + 1 > cfg.t_track_reid {
                        continue;
                    }
                    t.status = TrackStatus::Inactive { age: age + 1 };
                }
            }
            survivors.push(t);
        }

        // Duplicate suppression among live tracks.
        let active: Vec<usize> = (0..survivors.len()).filter(|&i| survivors[i].is_active()).collect();
        let entries: Vec<NmsEntry> = active
            .iter()
            .map(|&i| NmsEntry {
                bbox: survivors[i].bbox,
                score: survivors[i].score,
                existing: true,
                key: survivors[i].identity,
            })
            .collect();
        let kept: Vec<usize> = nms(&entries, cfg.sigma_nms).into_iter().map(|k| active[k]).collect();
        let mut suppressed = Vec::new();
        for &i in &active {
            if !kept.contains(&i) {
                suppressed.push(i);
            }
        }
        for &i in suppressed.iter().rev() {
            if cfg.reid {
                survivors[i].status = TrackStatus::Inactive { age: 0 };
            } else {
                survivors.remove(i);
            }
        }

        // New initializations from object queries.
        let candidates: Vec<usize> = (0..n_obj).filter(|&r| pred.score(r) >= cfg.sigma_object).collect();
        let candidates = match (cfg.filter_mode, public_dets) {
            (FilterMode::None, _) => candidates,
            (mode, dets) => {
                let boxes: Vec<BoundingBox> = candidates.iter().map(|&r| pred.boxes[r]).collect();
                filter_initializations(&boxes, dets.unwrap_or(&[]), mode, cfg.filter_iou_threshold)
                    .into_iter()
                    .map(|k| candidates[k])
                    .collect()
            }
        };
        let live: Vec<BoundingBox> = survivors.iter().filter(|t| t.is_active()).map(|t| t.bbox).collect();
        let entries: Vec<NmsEntry> = candidates
            .iter()
            .map(|&r| NmsEntry {
                bbox: pred.boxes[r],
                score: pred.score(r),
                existing: false,
                key: r as u64,
            })
            .collect();
        for k in nms_against(&live, &entries, cfg.sigma_nms) {
            let row = candidates[k];
            survivors.push(TrackState {
                identity: self.next_identity,
                query: pred.embeddings.row(row).to_vec(),
                bbox: pred.boxes[row],
                score: pred.score(row),
                status: TrackStatus::Active,
            });
            self.next_identity += 1;
        }

        self.tracks = survivors;
        let mut out: Vec<TrackOutput> = self
            .tracks
            .iter()
            .filter(|t| t.is_active())
            .map(|t| TrackOutput {
                identity: t.identity,
                bbox: t.bbox,
                score: t.score,
            })
            .collect();
        out.sort_by_key(|o| o.identity);
        Ok(out)
    }
}
