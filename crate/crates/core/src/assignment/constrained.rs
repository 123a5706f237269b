use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{hungarian, match_cost, CostMatrix, CostWeights};
use crate::error::{Error, Result};
use crate::model::FramePrediction;
use crate::sequence::LabeledObject;
use crate::Identity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ByIdentity,
    ByCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedPair {
    pub gt: usize,
    pub prediction: usize,
    pub provenance: Provenance,
}

/// Injective map from ground-truth indices to prediction rows, plus the
/// rows assigned to the background class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub pairs: Vec<MatchedPair>,
    pub background: Vec<usize>,
}

impl Assignment {
    /// Ground-truth index matched to prediction `row`, if any.
    pub fn gt_for(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.prediction == row).map(|p| p.gt)
    }

    pub fn prediction_for(&self, gt: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.gt == gt).map(|p| p.prediction)
    }
}

/// A prediction row decoded from a track query. `identity` is `None` for
/// injected false positives, which always go to background.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackSlot {
    pub row: usize,
    pub identity: Option<Identity>,
}

/// Partitions prediction rows given the identities carried by track slots:
///
/// * ground truth whose identity has a track slot is paired with that slot;
/// * track slots whose identity is absent from the ground truth (and false
///   positive slots) become background;
/// * the remaining ground truth is matched to object slots by minimum
///   [`match_cost`], and unmatched object slots become background.
pub fn constrained_assignment(
    gts: &[LabeledObject],
    track_slots: &[TrackSlot],
    object_slots: &[usize],
    preds: &FramePrediction,
    w: &CostWeights,
) -> Result<Assignment> {
    let n = preds.len();
    let mut rows_seen = BTreeSet::new();
    for &row in track_slots.iter().map(|s| &s.row).chain(object_slots) {
        if row >= n {
            return Err(Error::Index { index: row, len: n });
        }
        if !rows_seen.insert(row) {
            return Err(Error::Input(alloc::format!("prediction row {} used by two slots", row)));
        }
    }
    let mut slot_of: BTreeMap<Identity, usize> = BTreeMap::new();
    for s in track_slots {
        if let Some(id) = s.identity {
            if slot_of.insert(id, s.row).is_some() {
                return Err(Error::Input(alloc::format!("track identity {} appears twice", id)));
            }
        }
    }
    let mut gt_ids = BTreeSet::new();
    for g in gts {
        if !gt_ids.insert(g.identity) {
            return Err(Error::Input(alloc::format!("ground-truth identity {} appears twice", g.identity)));
        }
    }

    let mut out = Assignment::default();
    let mut new_objects = Vec::new();
    for (gi, g) in gts.iter().enumerate() {
        match slot_of.get(&g.identity) {
            Some(&row) => out.pairs.push(super::MatchedPair {
                gt: gi,
                prediction: row,
                provenance: Provenance::ByIdentity,
            }),
            None => new_objects.push(gi),
        }
    }

    if !new_objects.is_empty() {
        if new_objects.len() > object_slots.len() {
            return Err(Error::Input(alloc::format!(
                "{} new objects but only {} object queries",
                new_objects.len(),
                object_slots.len()
            )));
        }
        let mut err = None;
        let cost = CostMatrix::from_fn(new_objects.len(), object_slots.len(), |r, c| {
            let g = &gts[new_objects[r]];
            let row = object_slots[c];
            match match_cost(&g.bbox, preds.class_probs.at(row, g.class), &preds.boxes[row], w) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        let sol = hungarian(&cost)?;
        for (r, &c) in sol.columns.iter().enumerate() {
            out.pairs.push(MatchedPair {
                gt: new_objects[r],
                prediction: object_slots[c],
                provenance: Provenance::ByCost,
            });
        }
    }

    let assigned: BTreeSet<usize> = out.pairs.iter().map(|p| p.prediction).collect();
    out.background = rows_seen.into_iter().filter(|r| !assigned.contains(r)).collect();
    out.pairs.sort_by_key(|p| p.gt);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BoundingBox;
    use crate::numerics::Tensor;
    use alloc::vec;

    fn preds(boxes: Vec<BoundingBox>) -> FramePrediction {
        let n = boxes.len();
        FramePrediction {
            embeddings: Tensor::zeros(&[n, 2]),
            class_probs: Tensor::matrix(n, 2, vec![0.5; 2 * n]).unwrap(),
            boxes,
        }
    }

    fn gt(id: Identity, cx: f64) -> LabeledObject {
        LabeledObject::new(id, BoundingBox::new(cx, 0.5, 0.1, 0.1))
    }

    #[test]
    fn three_way_partition() {
        // rows 0,1 object slots; rows 2 (id 1), 3 (id 2) track slots.
        let p = preds(vec![
            BoundingBox::new(0.2, 0.5, 0.1, 0.1),
            BoundingBox::new(0.8, 0.5, 0.1, 0.1),
            BoundingBox::new(0.5, 0.5, 0.1, 0.1),
            BoundingBox::new(0.5, 0.5, 0.1, 0.1),
        ]);
        let slots = [
            TrackSlot { row: 2, identity: Some(1) },
            TrackSlot { row: 3, identity: Some(2) },
        ];
        let gts = [gt(2, 0.5), gt(3, 0.79)];
        let a = constrained_assignment(&gts, &slots, &[0, 1], &p, &CostWeights::default()).unwrap();
        assert_eq!(
            a.pairs,
            vec![
                MatchedPair { gt: 0, prediction: 3, provenance: Provenance::ByIdentity },
                MatchedPair { gt: 1, prediction: 1, provenance: Provenance::ByCost },
            ]
        );
        assert_eq!(a.background, vec![0, 2]);
    }

    #[test]
    fn no_tracks_is_plain_detection_matching() {
        let p = preds(vec![BoundingBox::new(0.2, 0.5, 0.1, 0.1), BoundingBox::new(0.8, 0.5, 0.1, 0.1)]);
        let a = constrained_assignment(&[gt(5, 0.21)], &[], &[0, 1], &p, &CostWeights::default()).unwrap();
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.pairs[0].provenance, Provenance::ByCost);
        assert_eq!(a.pairs[0].prediction, 0);
    }

    #[test]
    fn empty_ground_truth_is_all_background() {
        let p = preds(vec![BoundingBox::new(0.2, 0.5, 0.1, 0.1); 3]);
        let slots = [TrackSlot { row: 2, identity: Some(9) }];
        let a = constrained_assignment(&[], &slots, &[0, 1], &p, &CostWeights::default()).unwrap();
        assert!(a.pairs.is_empty());
        assert_eq!(a.background, vec![0, 1, 2]);
    }

    #[test]
    fn false_positive_slots_are_background() {
        let p = preds(vec![BoundingBox::new(0.2, 0.5, 0.1, 0.1); 3]);
        let slots = [TrackSlot { row: 1, identity: Some(1) }, TrackSlot { row: 2, identity: None }];
        let a = constrained_assignment(&[gt(1, 0.2)], &slots, &[0], &p, &CostWeights::default()).unwrap();
        assert_eq!(a.background, vec![0, 2]);
    }

    #[test]
    fn duplicate_identities_rejected() {
        let p = preds(vec![BoundingBox::new(0.2, 0.5, 0.1, 0.1); 2]);
        assert!(matches!(
            constrained_assignment(&[gt(1, 0.2), gt(1, 0.3)], &[], &[0, 1], &p, &CostWeights::default()),
            Err(Error::Input(_))
        ));
        let slots = [TrackSlot { row: 0, identity: Some(4) }, TrackSlot { row: 1, identity: Some(4) }];
        assert!(constrained_assignment(&[], &slots, &[], &p, &CostWeights::default()).is_err());
    }
}
