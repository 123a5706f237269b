//! CLEAR MOT and IDF1 over a ground-truth and a hypothesis sequence.
//!
//! Both sides are [`SequenceGT`] values indexed by frame. Frames missing on
//! either side count as empty.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::assignment::{hungarian, CostMatrix};
use crate::bbox::{iou, BoundingBox};
use crate::sequence::{LabeledObject, SequenceGT};
use crate::Identity;

/// MOTChallenge matching threshold.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Coverage at or above which a gt track is mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage at or below which a gt track is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

/// Cost of a pair below the IoU threshold. Larger than any sum of valid
/// costs, so the solver maximizes the number of valid pairs first.
const INVALID: f64 = 1e6;

/// Counts behind the CLEAR MOT and IDF1 scores. Reports over several
/// sequences combine by summing counts, see [`MetricReport::aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub mota: f64,
    pub idf1: f64,
    pub mt: usize,
    pub ml: usize,
    pub fp: usize,
    pub fn_: usize,
    pub id_switches: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
    pub idtp: usize,
    pub gt_tracks: usize,
}

impl MetricReport {
    /// Recomputes the two ratios from the counts.
    pub fn from_counts(mut self) -> Self {
        self.mota = mota(self.fp, self.fn_, self.id_switches, self.gt_total);
        self.idf1 = idf1_ratio(self.idtp, self.gt_total, self.hyp_total);
        self
    }

    pub fn aggregate(reports: &[MetricReport]) -> Self {
        let mut all = MetricReport::default();
        for r in reports {
            all.mt += r.mt;
            all.ml += r.ml;
            all.fp += r.fp;
            all.fn_ += r.fn_;
            all.id_switches += r.id_switches;
            all.gt_total += r.gt_total;
            all.hyp_total += r.hyp_total;
            all.idtp += r.idtp;
            all.gt_tracks += r.gt_tracks;
        }
        all.from_counts()
    }
}

/// `1 − (fp + fn + idsw) / gt_total`. An empty ground truth scores as if it
/// held a single box.
pub fn mota(fp: usize, fn_: usize, id_switches: usize, gt_total: usize) -> f64 {
    1.0 - (fp + fn_ + id_switches) as f64 / gt_total.max(1) as f64
}

fn idf1_ratio(idtp: usize, gt_total: usize, hyp_total: usize) -> f64 {
    if gt_total + hyp_total == 0 {
        return 1.0;
    }
    2.0 * idtp as f64 / (gt_total + hyp_total) as f64
}

fn frame(seq: &SequenceGT, t: usize) -> &[LabeledObject] {
    seq.frames.get(t).map_or(&[], |f| f.as_slice())
}

/// Hungarian on `1 − IoU` between the listed gt and hyp indices; returns
/// pairs with IoU at or above the threshold.
fn match_frame(gts: &[BoundingBox], hyps: &[BoundingBox], threshold: f64) -> Vec<(usize, usize)> {
    if gts.is_empty() || hyps.is_empty() {
        return Vec::new();
    }
    let cost = |g: usize, h: usize| {
        let v = iou(&gts[g], &hyps[h]);
        if v >= threshold {
            1.0 - v
        } else {
            INVALID
        }
    };
    let transpose = gts.len() > hyps.len();
    let m = if transpose {
        CostMatrix::from_fn(hyps.len(), gts.len(), |h, g| cost(g, h))
    } else {
        CostMatrix::from_fn(gts.len(), hyps.len(), cost)
    }
    .expect("finite costs");
    let sol = hungarian(&m).expect("rows not exceeding columns");
    sol.columns
        .iter()
        .enumerate()
        .map(|(r, &c)| if transpose { (c, r) } else { (r, c) })
        .filter(|&(g, h)| iou(&gts[g], &hyps[h]) >= threshold)
        .collect()
}

/// MOTA family: per-frame correspondence with carry-over of last frame's
/// still-valid matches, then Hungarian for the rest.
pub fn clear_mot(gt: &SequenceGT, hyp: &SequenceGT, iou_threshold: f64) -> MetricReport {
    let n_frames = gt.len().max(hyp.len());
    let mut last_frame: BTreeMap<Identity, Identity> = BTreeMap::new();
    let mut last_ever: BTreeMap<Identity, Identity> = BTreeMap::new();
    let mut present: BTreeMap<Identity, usize> = BTreeMap::new();
    let mut covered: BTreeMap<Identity, usize> = BTreeMap::new();
    let mut r = MetricReport::default();

    for t in 0..n_frames {
        let g = frame(gt, t);
        let h = frame(hyp, t);
        r.gt_total += g.len();
        r.hyp_total += h.len();
        for o in g {
            *present.entry(o.identity).or_default() += 1;
        }

        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        let mut matches: Vec<(usize, usize)> = Vec::new();
        for (gi, o) in g.iter().enumerate() {
            let Some(&hid) = last_frame.get(&o.identity) else { continue };
            if let Some(hi) = h.iter().position(|x| x.identity == hid) {
                if !h_used[hi] && iou(&o.bbox, &h[hi].bbox) >= iou_threshold {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    matches.push((gi, hi));
                }
            }
        }
        let g_rest: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let h_rest: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        let gb: Vec<BoundingBox> = g_rest.iter().map(|&i| g[i].bbox).collect();
        let hb: Vec<BoundingBox> = h_rest.iter().map(|&i| h[i].bbox).collect();
        for (a, b) in match_frame(&gb, &hb, iou_threshold) {
            matches.push((g_rest[a], h_rest[b]));
        }

        last_frame.clear();
        for &(gi, hi) in &matches {
            let gid = g[gi].identity;
            let hid = h[hi].identity;
            if let Some(&prev) = last_ever.get(&gid) {
                if prev != hid {
                    r.id_switches += 1;
                }
            }
            last_ever.insert(gid, hid);
            last_frame.insert(gid, hid);
            *covered.entry(gid).or_default() += 1;
        }
        r.fp += h.len() - matches.len();
        r.fn_ += g.len() - matches.len();
    }

    r.gt_tracks = present.len();
    for (id, &n) in &present {
        let c = covered.get(id).copied().unwrap_or(0) as f64 / n as f64;
        if c >= MOSTLY_TRACKED {
            r.mt += 1;
        } else if c <= MOSTLY_LOST {
            r.ml += 1;
        }
    }
    r.idtp = idtp(gt, hyp, iou_threshold);
    r.from_counts()
}

/// Matched frames for every (gt track, hyp track) pair, with track lists
/// in ascending identity order.
pub fn trajectory_overlaps(gt: &SequenceGT, hyp: &SequenceGT, iou_threshold: f64) -> (Vec<Identity>, Vec<Identity>, Vec<Vec<usize>>) {
    let gids: Vec<Identity> = gt.identities().into_iter().collect();
    let hids: Vec<Identity> = hyp.identities().into_iter().collect();
    let mut counts = vec![vec![0usize; hids.len()]; gids.len()];
    for t in 0..gt.len().min(hyp.len()) {
        for o in frame(gt, t) {
            let gi = gids.binary_search(&o.identity).expect("listed identity");
            for q in frame(hyp, t) {
                if iou(&o.bbox, &q.bbox) >= iou_threshold {
                    let hi = hids.binary_search(&q.identity).expect("listed identity");
                    counts[gi][hi] += 1;
                }
            }
        }
    }
    (gids, hids, counts)
}

/// Identity true positives under the best one-to-one trajectory pairing.
pub fn idtp(gt: &SequenceGT, hyp: &SequenceGT, iou_threshold: f64) -> usize {
    let (gids, hids, counts) = trajectory_overlaps(gt, hyp, iou_threshold);
    if gids.is_empty() || hids.is_empty() {
        return 0;
    }
    let transpose = gids.len() > hids.len();
    let m = if transpose {
        CostMatrix::from_fn(hids.len(), gids.len(), |h, g| -(counts[g][h] as f64))
    } else {
        CostMatrix::from_fn(gids.len(), hids.len(), |g, h| -(counts[g][h] as f64))
    }
    .expect("finite costs");
    let sol = hungarian(&m).expect("rows not exceeding columns");
    sol.columns
        .iter()
        .enumerate()
        .map(|(r, &c)| if transpose { counts[c][r] } else { counts[r][c] })
        .sum()
}

/// `2·IDTP / (gt boxes + hyp boxes)`.
pub fn idf1(gt: &SequenceGT, hyp: &SequenceGT, iou_threshold: f64) -> f64 {
    idf1_ratio(idtp(gt, hyp, iou_threshold), gt.total_boxes(), hyp.total_boxes())
}
