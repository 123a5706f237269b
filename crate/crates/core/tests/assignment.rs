use std::collections::BTreeSet;

use attntrack_core::assignment::{constrained_assignment, hungarian, CostMatrix, CostWeights, Provenance, TrackSlot};
use attntrack_core::bbox::{giou, iou};
use attntrack_core::model::FramePrediction;
use attntrack_core::sequence::LabeledObject;
use attntrack_core::{BoundingBox, Tensor};
use proptest::prelude::*;

fn permutations(n: usize, m: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == n {
        out.push(prefix.clone());
        return;
    }
    for c in 0..m {
        if !prefix.contains(&c) {
            prefix.push(c);
            permutations(n, m, prefix, out);
            prefix.pop();
        }
    }
}

fn brute_force(cost: &CostMatrix) -> f64 {
    let mut all = Vec::new();
    permutations(cost.rows(), cost.cols(), &mut Vec::new(), &mut all);
    all.iter()
        .map(|p| p.iter().enumerate().map(|(r, &c)| cost.at(r, c)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn cost_matrix() -> impl Strategy<Value = CostMatrix> {
    (1usize..=7)
        .prop_flat_map(|n| (Just(n), n..=7))
        .prop_flat_map(|(n, m)| (Just(n), Just(m), prop::collection::vec(-50i32..50, n * m)))
        .prop_map(|(n, m, v)| CostMatrix::new(n, m, v.into_iter().map(f64::from).collect()).unwrap())
}

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (0.05f64..0.95, 0.05f64..0.95, 0.02f64..0.5, 0.02f64..0.5).prop_map(|(cx, cy, w, h)| BoundingBox::new(cx, cy, w, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Integer costs make every sum exact, so equality is exact.
    #[test]
    fn hungarian_equals_brute_force(cost in cost_matrix()) {
        let sol = hungarian(&cost).unwrap();
        prop_assert_eq!(sol.total, brute_force(&cost));
        let used: BTreeSet<usize> = sol.columns.iter().copied().collect();
        prop_assert_eq!(used.len(), cost.rows());
        let recomputed: f64 = sol.columns.iter().enumerate().map(|(r, &c)| cost.at(r, c)).sum();
        prop_assert_eq!(recomputed, sol.total);
    }

    #[test]
    fn giou_symmetric_and_bounded_by_iou(a in bbox(), b in bbox()) {
        let ab = giou(&a, &b).unwrap();
        let ba = giou(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= iou(&a, &b) + 1e-12);
        prop_assert!(ab > -1.0 && ab <= 1.0);
        prop_assert!((giou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Adding a constant to every entry, or scaling by a power of two,
    /// leaves the optimal columns unchanged.
    #[test]
    fn hungarian_shift_and_scale_invariant(cost in cost_matrix(), shift in -20i32..20, k in -3i32..4) {
        let base = hungarian(&cost).unwrap();
        let s = 2f64.powi(k);
        let shifted = CostMatrix::from_fn(cost.rows(), cost.cols(), |r, c| cost.at(r, c) + f64::from(shift)).unwrap();
        let scaled = CostMatrix::from_fn(cost.rows(), cost.cols(), |r, c| cost.at(r, c) * s).unwrap();
        prop_assert_eq!(&hungarian(&shifted).unwrap().columns, &base.columns);
        prop_assert_eq!(&hungarian(&scaled).unwrap().columns, &base.columns);
    }
}

#[derive(Debug, Clone)]
struct Scenario {
    /// Identities of the previous frame's track slots; `None` is an
    /// injected false positive.
    tracks: Vec<Option<u64>>,
    gts: Vec<u64>,
    n_object: usize,
    boxes: Vec<BoundingBox>,
    probs: Vec<f64>,
    gt_boxes: Vec<BoundingBox>,
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        prop::collection::btree_set(1u64..10, 0..6),
        prop::collection::btree_set(1u64..10, 0..6),
        0usize..3,
        1usize..4,
    )
        .prop_flat_map(|(prev, curr, n_fp, extra)| {
            let mut tracks: Vec<Option<u64>> = prev.iter().copied().map(Some).collect();
            tracks.extend(std::iter::repeat(None).take(n_fp));
            let gts: Vec<u64> = curr.into_iter().collect();
            let new = gts.iter().filter(|g| !prev.contains(g)).count();
            let n_object = new + extra;
            let n = tracks.len() + n_object;
            (
                Just(tracks),
                Just(gts.clone()),
                Just(n_object),
                prop::collection::vec(bbox(), n),
                prop::collection::vec(0.01f64..0.99, n),
                prop::collection::vec(bbox(), gts.len()),
            )
        })
        .prop_map(|(tracks, gts, n_object, boxes, probs, gt_boxes)| Scenario {
            tracks,
            gts,
            n_object,
            boxes,
            probs,
            gt_boxes,
        })
}

fn run(s: &Scenario, w: &CostWeights) -> (attntrack_core::assignment::Assignment, Vec<TrackSlot>, Vec<usize>, Vec<LabeledObject>) {
    let n = s.boxes.len();
    let preds = FramePrediction {
        embeddings: Tensor::zeros(&[n, 1]),
        boxes: s.boxes.clone(),
        class_probs: Tensor::matrix(n, 2, s.probs.iter().flat_map(|&p| [p, 1.0 - p]).collect()).unwrap(),
    };
    // Object slots first, then track slots, as the decoder lays them out.
    let object_slots: Vec<usize> = (0..s.n_object).collect();
    let track_slots: Vec<TrackSlot> = s
        .tracks
        .iter()
        .enumerate()
        .map(|(i, &identity)| TrackSlot { row: s.n_object + i, identity })
        .collect();
    let gts: Vec<LabeledObject> = s.gts.iter().zip(&s.gt_boxes).map(|(&id, &b)| LabeledObject::new(id, b)).collect();
    let a = constrained_assignment(&gts, &track_slots, &object_slots, &preds, w).unwrap();
    (a, track_slots, object_slots, gts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn three_way_partition_holds(s in scenario()) {
        let (a, track_slots, object_slots, gts) = run(&s, &CostWeights::default());
        let n = s.boxes.len();

        let rows: Vec<usize> = a.pairs.iter().map(|p| p.prediction).collect();
        let row_set: BTreeSet<usize> = rows.iter().copied().collect();
        prop_assert_eq!(row_set.len(), rows.len(), "injective");
        let gt_set: BTreeSet<usize> = a.pairs.iter().map(|p| p.gt).collect();
        prop_assert_eq!(gt_set.len(), gts.len(), "every gt matched once");
        let bg: BTreeSet<usize> = a.background.iter().copied().collect();
        prop_assert!(row_set.is_disjoint(&bg));
        prop_assert_eq!(row_set.len() + bg.len(), n);

        let gt_ids: BTreeSet<u64> = s.gts.iter().copied().collect();
        for slot in &track_slots {
            match slot.identity {
                Some(id) if gt_ids.contains(&id) => {
                    let gi = s.gts.iter().position(|&g| g == id).unwrap();
                    prop_assert_eq!(a.prediction_for(gi), Some(slot.row));
                    let pair = a.pairs.iter().find(|p| p.gt == gi).unwrap();
                    prop_assert_eq!(pair.provenance, Provenance::ByIdentity);
                }
                _ => prop_assert!(bg.contains(&slot.row)),
            }
        }
        let tracked: BTreeSet<u64> = track_slots.iter().filter_map(|t| t.identity).collect();
        for p in &a.pairs {
            if !tracked.contains(&s.gts[p.gt]) {
                prop_assert!(object_slots.contains(&p.prediction));
                prop_assert_eq!(p.provenance, Provenance::ByCost);
            }
        }
    }

    #[test]
    fn scaling_cost_weights_keeps_assignment(s in scenario(), k in -2i32..3) {
        let w = CostWeights::default();
        let f = 2f64.powi(k);
        let scaled = CostWeights { lambda_cls: w.lambda_cls * f, lambda_l1: w.lambda_l1 * f, lambda_iou: w.lambda_iou * f };
        prop_assert_eq!(run(&s, &w).0, run(&s, &scaled).0);
    }
}
