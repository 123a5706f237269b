use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{nms, NmsEntry, QueryDecoder, TrackOutput};
use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::FramePrediction;
use crate::Identity;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyConfig {
    pub sigma_object: f64,
    pub sigma_nms: f64,
    /// Largest center distance, in normalized units, that may be linked.
    pub max_center_distance: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            sigma_object: 0.4,
            sigma_nms: 0.9,
            max_center_distance: 0.2,
        }
    }
}

/// Detection-only baseline: decodes object queries alone and links each
/// frame's detections to the previous frame's boxes by greedy nearest
/// center distance.
#[derive(Debug, Clone)]
pub struct GreedyCenterTracker {
    cfg: GreedyConfig,
    previous: Vec<TrackOutput>,
    next_identity: Identity,
}

impl GreedyCenterTracker {
    pub fn new(cfg: GreedyConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.sigma_object) || !(0.0..=1.0).contains(&cfg.sigma_nms) || !(cfg.max_center_distance >= 0.0) {
            return Err(Error::Config("invalid greedy tracker thresholds".into()));
        }
        Ok(Self {
            cfg,
            previous: Vec::new(),
            next_identity: 1,
        })
    }

    pub fn step<D: QueryDecoder>(&mut self, decoder: &mut D, prev: &Image, curr: &Image) -> Result<Vec<TrackOutput>> {
        let pred = decoder.decode(prev, curr, &[])?;
        self.update(&pred)
    }

    pub fn update(&mut self, pred: &FramePrediction) -> Result<Vec<TrackOutput>> {
        let rows: Vec<usize> = (0..pred.len()).filter(|&r| pred.score(r) >= self.cfg.sigma_object).collect();
        let entries: Vec<NmsEntry> = rows
            .iter()
            .map(|&r| NmsEntry {
                bbox: pred.boxes[r],
                score: pred.score(r),
                existing: false,
                key: r as u64,
            })
            .collect();
        let mut dets: Vec<(BoundingBox, f64)> = nms(&entries, self.cfg.sigma_nms)
            .into_iter()
            .map(|k| (entries[k].bbox, entries[k].score))
            .collect();
        dets.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));

        let mut pairs = Vec::new();
        for (d, det) in dets.iter().enumerate() {
            for (p, prev) in self.previous.iter().enumerate() {
                let dist = det.0.center_distance(&prev.bbox);
                if dist <= self.cfg.max_center_distance {
                    pairs.push((dist, d, p));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));
        let mut identity: Vec<Option<Identity>> = alloc::vec![None; dets.len()];
        let mut prev_used = alloc::vec![false; self.previous.len()];
        for (_, d, p) in pairs {
            if identity[d].is_none() && !prev_used[p] {
                identity[d] = Some(self.previous[p].identity);
                prev_used[p] = true;
            }
        }

        let mut out: Vec<TrackOutput> = dets
            .iter()
            .zip(identity)
            .map(|(&(bbox, score), id)| {
                let identity = id.unwrap_or_else(|| {
                    let id = self.next_identity;
                    self.next_identity += 1;
                    id
                });
                TrackOutput { identity, bbox, score }
            })
            .collect();
        out.sort_by_key(|o| o.identity);
        self.previous = out.clone();
        Ok(out)
    }
}
