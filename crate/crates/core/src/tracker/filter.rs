use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::bbox::{iou, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    #[default]
    None,
    /// A public detection licenses the candidate it overlaps most, if the
    /// IoU exceeds the threshold.
    Iou,
    /// A public detection licenses the nearest candidate whose box contains
    /// the detection's center.
    CenterDistance,
}

fn greedy(mut pairs: Vec<(f64, usize, usize)>, n_det: usize, n_cand: usize, descending: bool) -> Vec<usize> {
    pairs.sort_by(|a, b| {
        let o = a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal);
        let o = if descending { o.reverse() } else { o };
        o.then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2))
    });
    let mut det_used = alloc::vec![false; n_det];
    let mut cand_used = alloc::vec![false; n_cand];
    let mut allowed = Vec::new();
    for (_, d, c) in pairs {
        if !det_used[d] && !cand_used[c] {
            det_used[d] = true;
            cand_used[c] = true;
            allowed.push(c);
        }
    }
    allowed.sort_unstable();
    allowed
}

/// Candidate indices licensed by public detections. Each detection
/// licenses at most one candidate; pairing is greedy (descending IoU, or
/// ascending center distance). `FilterMode::None` allows everything.
pub fn filter_initializations(candidates: &[BoundingBox], public_dets: &[BoundingBox], mode: FilterMode, iou_threshold: f64) -> Vec<usize> {
    let mut pairs = Vec::new();
    match mode {
        FilterMode::None => return (0..candidates.len()).collect(),
        FilterMode::Iou => {
            for (d, det) in public_dets.iter().enumerate() {
                for (c, cand) in candidates.iter().enumerate() {
                    let v = iou(det, cand);
                    if v > iou_threshold {
                        pairs.push((v, d, c));
                    }
                }
            }
            greedy(pairs, public_dets.len(), candidates.len(), true)
        }
        FilterMode::CenterDistance => {
            for (d, det) in public_dets.iter().enumerate() {
                for (c, cand) in candidates.iter().enumerate() {
                    if cand.contains_point(det.cx, det.cy) {
                        pairs.push((det.center_distance(cand), d, c));
                    }
                }
            }
            greedy(pairs, public_dets.len(), candidates.len(), false)
        }
    }
}
