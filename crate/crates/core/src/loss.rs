//! Set-prediction loss over all decoded queries and the two-step
//! (detect on `t−1`, track into `t`) training objective.

use alloc::vec::Vec;

use rand::Rng;

use crate::assignment::{constrained_assignment, Assignment, CostWeights, TrackSlot};
use crate::augment::{drop_false_negatives, jitter_gt, spawn_false_positives, AugmentConfig, CandidateQuery};
use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Model, PredictionVars};
use crate::numerics::{Graph, Tensor, Var};
use crate::sequence::LabeledObject;

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: CostWeights,
    /// Multiplier on the class term of background rows.
    pub background_weight: f64,
    /// Include the detection loss of frame `t−1` in the two-step total.
    pub supervise_prev_frame: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            background_weight: 1.0,
            supervise_prev_frame: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.background_weight.is_finite() && self.background_weight >= 0.0) {
            return Err(Error::Config("background_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryStatus {
    Matched { bbox: BoundingBox, class: usize },
    Background,
}

/// Scalar loss terms. `total` is the sum of the three components.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: Var,
    pub cls: Var,
    pub l1: Var,
    pub giou: Var,
    pub n_matched: usize,
    pub n_background: usize,
}

/// Plain values of a [`LossBreakdown`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValues {
    pub total: f64,
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
}

impl LossBreakdown {
    pub fn values(&self, g: &Graph) -> Result<LossValues> {
        Ok(LossValues {
            total: g.scalar(self.total)?,
            cls: g.scalar(self.cls)?,
            l1: g.scalar(self.l1)?,
            giou: g.scalar(self.giou)?,
        })
    }

    fn combine(g: &mut Graph, a: &LossBreakdown, b: &LossBreakdown) -> Result<Self> {
        Ok(Self {
            total: g.add(a.total, b.total)?,
            cls: g.add(a.cls, b.cls)?,
            l1: g.add(a.l1, b.l1)?,
            giou: g.add(a.giou, b.giou)?,
            n_matched: a.n_matched + b.n_matched,
            n_background: a.n_background + b.n_background,
        })
    }
}

fn zero(g: &mut Graph) -> Var {
    g.constant(&Tensor::zeros(&[1]))
}

/// Differentiable gIoU per row of two `[M × 4]` center-format box sets.
pub fn giou_rows(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let corners = |g: &mut Graph, b: Var| -> Result<[Var; 6]> {
        let cx = g.slice_cols(b, 0, 1)?;
        let cy = g.slice_cols(b, 1, 1)?;
        let w = g.slice_cols(b, 2, 1)?;
        let h = g.slice_cols(b, 3, 1)?;
        let hw = g.scale(w, 0.5)?;
        let hh = g.scale(h, 0.5)?;
        Ok([g.sub(cx, hw)?, g.sub(cy, hh)?, g.add(cx, hw)?, g.add(cy, hh)?, w, h])
    };
    let [px1, py1, px2, py2, pw, ph] = corners(g, pred)?;
    let [tx1, ty1, tx2, ty2, tw, th] = corners(g, target)?;

    let ix1 = g.max(px1, tx1)?;
    let iy1 = g.max(py1, ty1)?;
    let ix2 = g.min(px2, tx2)?;
    let iy2 = g.min(py2, ty2)?;
    let iw = g.sub(ix2, ix1)?;
    let iw = g.relu(iw)?;
    let ih = g.sub(iy2, iy1)?;
    let ih = g.relu(ih)?;
    let inter = g.mul(iw, ih)?;

    let area_p = g.mul(pw, ph)?;
    let area_t = g.mul(tw, th)?;
    let areas = g.add(area_p, area_t)?;
    let union = g.sub(areas, inter)?;
    let iou = g.div(inter, union)?;

    let hx1 = g.min(px1, tx1)?;
    let hy1 = g.min(py1, ty1)?;
    let hx2 = g.max(px2, tx2)?;
    let hy2 = g.max(py2, ty2)?;
    let hw = g.sub(hx2, hx1)?;
    let hh = g.sub(hy2, hy1)?;
    let hull = g.mul(hw, hh)?;
    let slack = g.sub(hull, union)?;
    let penalty = g.div(slack, hull)?;
    g.sub(iou, penalty)
}

fn box_terms(g: &mut Graph, boxes: Var, rows: &[usize], targets: &[BoundingBox], w: &CostWeights) -> Result<(Var, Var)> {
    if rows.is_empty() {
        return Ok((zero(g), zero(g)));
    }
    let pred = g.gather_rows(boxes, rows)?;
    let flat: Vec<f64> = targets.iter().flat_map(|b| b.to_array()).collect();
    let target = g.constant(&Tensor::matrix(rows.len(), 4, flat)?);
    let diff = g.sub(pred, target)?;
    let diff = g.abs(diff)?;
    let l1 = g.sum(diff)?;
    let l1 = g.scale(l1, w.lambda_l1)?;
    let gi = giou_rows(g, pred, target)?;
    let gi = g.sum(gi)?;
    // Σ (1 − gIoU) = M − Σ gIoU
    let gi = g.scale(gi, -w.lambda_iou)?;
    let gi = g.offset(gi, w.lambda_iou * rows.len() as f64)?;
    Ok((l1, gi))
}

/// Loss of one prediction row: `−λ_cls·ln p̂(c) + L_box` when matched,
/// `−λ_cls·ln p̂(background)` otherwise. Probabilities are floored at
/// [`PROB_FLOOR`] inside the logarithm.
pub fn query_loss(g: &mut Graph, boxes: Var, class_probs: Var, row: usize, status: QueryStatus, cfg: &LossConfig) -> Result<Var> {
    let c = g.shape(class_probs)[1];
    let (class, weight) = match status {
        QueryStatus::Matched { class, .. } => (class, 1.0),
        QueryStatus::Background => (c - 1, cfg.background_weight),
    };
    let p = g.pick(class_probs, &[row * c + class])?;
    let lp = g.ln_clamped(p, PROB_FLOOR)?;
    let lp = g.sum(lp)?;
    let cls = g.scale(lp, -cfg.weights.lambda_cls * weight)?;
    match status {
        QueryStatus::Matched { bbox, .. } => {
            let (l1, gi) = box_terms(g, boxes, &[row], &[bbox], &cfg.weights)?;
            let b = g.add(l1, gi)?;
            g.add(cls, b)
        }
        QueryStatus::Background => Ok(cls),
    }
}

/// Sum of [`query_loss`] over all prediction rows; rows not paired by the
/// assignment are background.
pub fn set_loss(
    g: &mut Graph,
    boxes: Var,
    class_probs: Var,
    gts: &[LabeledObject],
    assignment: &Assignment,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let n = g.shape(class_probs)[0];
    let c = g.shape(class_probs)[1];
    let mut target = alloc::vec![c - 1; n];
    let mut weight = alloc::vec![cfg.background_weight; n];
    let mut rows = Vec::with_capacity(assignment.pairs.len());
    let mut boxes_gt = Vec::with_capacity(assignment.pairs.len());
    for p in &assignment.pairs {
        if p.prediction >= n || p.gt >= gts.len() {
            return Err(Error::Input("assignment does not fit predictions/ground truth".into()));
        }
        let gt = &gts[p.gt];
        if gt.class >= c - 1 {
            return Err(Error::Input(alloc::format!("ground-truth class {} out of range", gt.class)));
        }
        target[p.prediction] = gt.class;
        weight[p.prediction] = 1.0;
        rows.push(p.prediction);
        boxes_gt.push(gt.bbox);
    }
    let flat: Vec<usize> = (0..n).map(|r| r * c + target[r]).collect();
    let p = g.pick(class_probs, &flat)?;
    let lp = g.ln_clamped(p, PROB_FLOOR)?;
    let cls = if weight.iter().all(|&w| w == 1.0) {
        g.sum(lp)?
    } else {
        let wv = g.constant(&Tensor::new(alloc::vec![n], weight)?);
        let weighted = g.mul(lp, wv)?;
        g.sum(weighted)?
    };
    let cls = g.scale(cls, -cfg.weights.lambda_cls)?;
    let (l1, gi) = box_terms(g, boxes, &rows, &boxes_gt, &cfg.weights)?;
    let b = g.add(l1, gi)?;
    let total = g.add(cls, b)?;
    Ok(LossBreakdown {
        total,
        cls,
        l1,
        giou: gi,
        n_matched: rows.len(),
        n_background: n - rows.len(),
    })
}

fn supervised(g: &mut Graph, vars: &PredictionVars, gts: &[LabeledObject], a: &Assignment, cfg: &LossConfig) -> Result<LossBreakdown> {
    let mut out = set_loss(g, vars.boxes, vars.class_probs, gts, a, cfg)?;
    for &(b, p) in &vars.aux {
        let aux = set_loss(g, b, p, gts, a, cfg)?;
        let (nm, nb) = (out.n_matched, out.n_background);
        out = LossBreakdown::combine(g, &out, &aux)?;
        out.n_matched = nm;
        out.n_background = nb;
    }
    Ok(out)
}

/// Two adjacent annotated frames.
#[derive(Debug, Clone, Copy)]
pub struct FramePair<'a> {
    pub prev: &'a Image,
    pub curr: &'a Image,
    pub prev_gt: &'a [LabeledObject],
    pub curr_gt: &'a [LabeledObject],
}

/// One annotated frame of a training chain.
#[derive(Debug, Clone, Copy)]
pub struct AnnotatedFrame<'a> {
    pub image: &'a Image,
    pub gt: &'a [LabeledObject],
}

/// Result of [`two_step_loss`]: combined terms plus each step's
/// breakdown and the frame-`t` assignment.
#[derive(Debug, Clone)]
pub struct TwoStepOutput {
    pub total: LossBreakdown,
    pub prev_loss: LossBreakdown,
    pub curr_loss: LossBreakdown,
    pub curr_assignment: Assignment,
    pub track_slots: Vec<TrackSlot>,
}

/// Result of [`chain_loss`]. `steps[0]` is the detection step on the
/// first frame, `steps[k]` tracks into frame `k`.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub total: LossBreakdown,
    pub steps: Vec<LossBreakdown>,
    pub last_assignment: Assignment,
    pub track_slots: Vec<TrackSlot>,
}

/// (i) detects objects on `t−1` with object queries only and matches them
/// by cost; matched rows become track queries carrying the ground-truth
/// identity. Track augmentations drop and inject queries. (ii) decodes the
/// joint query set on `t` and applies the identity-constrained assignment.
///
/// The track queries stay on the graph, so frame-`t` gradients reach the
/// frame-`t−1` pass.
pub fn two_step_loss(
    model: &Model,
    g: &mut Graph,
    pair: FramePair<'_>,
    loss_cfg: &LossConfig,
    aug: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<TwoStepOutput> {
    let frames = [
        AnnotatedFrame {
            image: pair.prev,
            gt: pair.prev_gt,
        },
        AnnotatedFrame {
            image: pair.curr,
            gt: pair.curr_gt,
        },
    ];
    let mut out = chain_loss(model, g, &frames, loss_cfg, aug, rng)?;
    let curr_loss = out.steps.pop().expect("two steps");
    let prev_loss = out.steps.pop().expect("two steps");
    Ok(TwoStepOutput {
        total: out.total,
        prev_loss,
        curr_loss,
        curr_assignment: out.last_assignment,
        track_slots: out.track_slots,
    })
}

/// [`two_step_loss`] continued over a longer chain: after the detection
/// step on `frames[0]`, each later frame is decoded with the track queries
/// produced by the step before it, so track queries are trained on track
/// query outputs as well. Every frame but the last has its gt jittered.
/// With `supervise_prev_frame` off only the last step is summed.
pub fn chain_loss<R: Rng>(
    model: &Model,
    g: &mut Graph,
    frames: &[AnnotatedFrame<'_>],
    loss_cfg: &LossConfig,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    if frames.len() < 2 {
        return Err(Error::Input("a training chain needs at least two frames".into()));
    }
    let n_obj = model.config().n_object_queries;
    let object_rows: Vec<usize> = (0..n_obj).collect();
    let last = frames.len() - 1;
    let gt_of = |k: usize, rng: &mut R| -> Vec<LabeledObject> {
        if k == last {
            frames[k].gt.to_vec()
        } else {
            jitter_gt(frames[k].gt, aug.jitter_frac, rng)
        }
    };

    let gt0 = gt_of(0, rng);
    let mem = model.encode(g, frames[0].image, frames[0].image)?;
    let mut vars = model.decode(g, mem, None)?;
    let mut pred = vars.to_prediction(g);
    let mut a = constrained_assignment(&gt0, &[], &object_rows, &pred, &loss_cfg.weights)?;
    let mut steps = alloc::vec![supervised(g, &vars, &gt0, &a, loss_cfg)?];
    let mut gt_prev = gt0;
    let mut track_slots = Vec::new();

    for k in 1..frames.len() {
        let tracked: Vec<CandidateQuery<usize>> = a
            .pairs
            .iter()
            .map(|p| CandidateQuery {
                item: p.prediction,
                bbox: pred.boxes[p.prediction],
                identity: Some(gt_prev[p.gt].identity),
            })
            .collect();
        let tracked = drop_false_negatives(tracked, aug.p_fn, rng);
        let background: Vec<(usize, BoundingBox)> = a.background.iter().map(|&r| (r, pred.boxes[r])).collect();
        let queries = spawn_false_positives(tracked, &background, aug.p_fp, rng);

        let mem = model.encode(g, frames[k - 1].image, frames[k].image)?;
        let tq = if queries.is_empty() {
            None
        } else {
            let rows: Vec<usize> = queries.iter().map(|q| q.item).collect();
            Some(g.gather_rows(vars.embeddings, &rows)?)
        };
        vars = model.decode(g, mem, tq)?;
        pred = vars.to_prediction(g);
        track_slots = queries
            .iter()
            .enumerate()
            .map(|(j, q)| TrackSlot {
                row: n_obj + j,
                identity: q.identity,
            })
            .collect();
        let gt = gt_of(k, rng);
        a = constrained_assignment(&gt, &track_slots, &object_rows, &pred, &loss_cfg.weights)?;
        steps.push(supervised(g, &vars, &gt, &a, loss_cfg)?);
        gt_prev = gt;
    }

    let mut total = steps[last];
    if loss_cfg.supervise_prev_frame {
        for s in steps[..last].iter().rev() {
            total = LossBreakdown::combine(g, s, &total)?;
        }
    }
    Ok(ChainOutput {
        total,
        steps,
        last_assignment: a,
        track_slots,
    })
}
