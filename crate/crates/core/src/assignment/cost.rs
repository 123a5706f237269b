use crate::bbox::{giou, BoundingBox};
use crate::error::{Error, Result};

/// Weights of the class, ℓ1 and gIoU terms shared by the matching cost and
/// the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub lambda_cls: f64,
    pub lambda_l1: f64,
    pub lambda_iou: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            lambda_cls: 2.0,
            lambda_l1: 5.0,
            lambda_iou: 2.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_cls, self.lambda_l1, self.lambda_iou];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("cost weights must be finite and non-negative".into()));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("at least one cost weight must be positive".into()));
        }
        Ok(())
    }
}

/// `λ_ℓ1 · ‖gt − pred‖₁ + λ_iou · (1 − gIoU)`.
pub fn box_cost(gt: &BoundingBox, pred: &BoundingBox, w: &CostWeights) -> Result<f64> {
    let g = giou(gt, pred)?;
    Ok(w.lambda_l1 * gt.l1(pred) + w.lambda_iou * (1.0 - g))
}

/// `−λ_cls · p̂(c) + box_cost`; the plain probability of the ground-truth
/// class enters, not its logarithm, and the background column does not.
pub fn match_cost(gt: &BoundingBox, class_prob: f64, pred: &BoundingBox, w: &CostWeights) -> Result<f64> {
    Ok(-w.lambda_cls * class_prob + box_cost(gt, pred, w)?)
}
