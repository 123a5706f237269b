use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::bbox::{iou, BoundingBox};

/// A box competing in non-maximum suppression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsEntry {
    pub bbox: BoundingBox,
    pub score: f64,
    /// Existing tracks use `true` and win score ties over new
    /// initializations.
    pub existing: bool,
    /// Final tie-breaker, lower wins (identity or row index).
    pub key: u64,
}

fn order(a: &NmsEntry, b: &NmsEntry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.existing.cmp(&a.existing))
        .then_with(|| a.key.cmp(&b.key))
}

/// Greedy suppression by descending score: an entry is dropped iff its IoU
/// with an already kept box exceeds `sigma_nms`. Returns kept indices in
/// the order they were accepted.
pub fn nms(entries: &[NmsEntry], sigma_nms: f64) -> Vec<usize> {
    nms_against(&[], entries, sigma_nms)
}

/// [`nms`] with `kept` boxes accepted beforehand.
pub fn nms_against(kept: &[BoundingBox], entries: &[NmsEntry], sigma_nms: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&a, &b| order(&entries[a], &entries[b]));
    let mut boxes: Vec<BoundingBox> = kept.to_vec();
    let mut out = Vec::new();
    for i in idx {
        let b = entries[i].bbox;
        if boxes.iter().all(|k| iou(k, &b) <= sigma_nms) {
            boxes.push(b);
            out.push(i);
        }
    }
    out
}
