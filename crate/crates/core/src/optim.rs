//! First-order optimizers over a [`ParamStore`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    /// Heavy-ball SGD: `v ← μ·v + g`, `θ ← θ − lr·v`.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Rescale gradients whose global L2 norm exceeds this; 0 disables.
    pub clip_norm: f64,
    /// Step at which the learning rate is multiplied by `lr_drop_factor`;
    /// 0 disables.
    pub lr_drop_step: u64,
    pub lr_drop_factor: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr: 0.01,
            momentum: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: 0.0,
            lr_drop_step: 0,
            lr_drop_factor: 0.1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.clip_norm >= 0.0
            && self.lr_drop_factor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid optimizer settings".into()))
        }
    }

    /// Learning rate in effect at `step` (0-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.lr_drop_step > 0 && step >= self.lr_drop_step {
            self.lr * self.lr_drop_factor
        } else {
            self.lr
        }
    }
}

/// Optimizer with per-parameter moment buffers, laid out like the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    cfg: OptimConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig, params: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let first: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let second = match cfg.kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => first.clone(),
        };
        Ok(Self { cfg, step: 0, first, second })
    }

    /// Rebuilds an optimizer from saved buffers.
    pub fn from_state(cfg: OptimConfig, step: u64, first: Vec<Vec<f64>>, second: Vec<Vec<f64>>, params: &ParamStore) -> Result<Self> {
        let mut opt = Self::new(cfg, params)?;
        let fits = |bufs: &[Vec<f64>]| bufs.len() == params.len() && bufs.iter().zip(params.iter()).all(|(b, (_, t))| b.len() == t.len());
        if !fits(&first) || (cfg.kind == OptimizerKind::Adam && !fits(&second)) {
            return Err(Error::Input("optimizer state does not match parameters".into()));
        }
        opt.step = step;
        opt.first = first;
        if cfg.kind == OptimizerKind::Adam {
            opt.second = second;
        }
        Ok(opt)
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// Applies one update from the accumulated gradients and clears them.
    /// Parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        let lr = self.cfg.lr_at(self.step);
        let norm = params.grad_norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let clip = if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            self.cfg.clip_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let t = self.step as f64;
        let cfg = self.cfg;
        for (k, id) in params.ids().enumerate() {
            let tensor = params.get_mut(id);
            let Some(grad) = tensor.grad().map(|g| g.to_vec()) else { continue };
            let m = &mut self.first[k];
            match cfg.kind {
                OptimizerKind::Sgd => {
                    tensor.update(|i, w| {
                        let g = grad[i] * clip + cfg.weight_decay * w;
                        m[i] = cfg.momentum * m[i] + g;
                        w - lr * m[i]
                    })?;
                }
                OptimizerKind::Adam => {
                    let v = &mut self.second[k];
                    let c1 = 1.0 - math::pow(cfg.momentum, t);
                    let c2 = 1.0 - math::pow(cfg.beta2, t);
                    tensor.update(|i, w| {
                        let g = grad[i] * clip + cfg.weight_decay * w;
                        m[i] = cfg.momentum * m[i] + (1.0 - cfg.momentum) * g;
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                        w - lr * (m[i] / c1) / (math::sqrt(v[i] / c2) + cfg.eps)
                    })?;
                }
            }
            tensor.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Graph, Tensor};

    fn quadratic_step(opt: &mut Optimizer, store: &mut ParamStore) -> f64 {
        let id = store.ids().next().unwrap();
        let mut g = Graph::new();
        let x = g.param(store, id);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        let v = g.scalar(loss).unwrap();
        g.backward(loss).unwrap();
        g.accumulate_into(store).unwrap();
        opt.step(store).unwrap();
        v
    }

    fn store(v: &[f64]) -> ParamStore {
        let mut s = ParamStore::default();
        s.add("x", Tensor::new(alloc::vec![v.len()], v.to_vec()).unwrap());
        s
    }

    #[test]
    fn sgd_momentum_matches_hand_trace() {
        let mut s = store(&[1.0]);
        let mut opt = Optimizer::new(OptimConfig { lr: 0.1, ..OptimConfig::default() }, &s).unwrap();
        quadratic_step(&mut opt, &mut s);
        // g = 2, v = 2, x = 1 - 0.2
        assert!((s.iter().next().unwrap().1.values()[0] - 0.8).abs() < 1e-15);
        quadratic_step(&mut opt, &mut s);
        // g = 1.6, v = 1.8 + 1.6 = 3.4, x = 0.8 - 0.34
        assert!((s.iter().next().unwrap().1.values()[0] - 0.46).abs() < 1e-15);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut s = store(&[1.0, -2.0]);
        let mut opt = Optimizer::new(OptimConfig { lr: 0.0, ..OptimConfig::default() }, &s).unwrap();
        for _ in 0..3 {
            quadratic_step(&mut opt, &mut s);
        }
        assert_eq!(s.iter().next().unwrap().1.values(), &[1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = store(&[3.0, -1.0]);
        let cfg = OptimConfig {
            kind: OptimizerKind::Adam,
            lr: 0.01,
            ..OptimConfig::default()
        };
        let mut opt = Optimizer::new(cfg, &s).unwrap();
        quadratic_step(&mut opt, &mut s);
        let v = s.iter().next().unwrap().1.values();
        assert!((v[0] - 2.99).abs() < 1e-9);
        assert!((v[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn clipping_bounds_update() {
        let mut s = store(&[10.0]);
        let cfg = OptimConfig {
            lr: 1.0,
            momentum: 0.0,
            clip_norm: 0.5,
            ..OptimConfig::default()
        };
        let mut opt = Optimizer::new(cfg, &s).unwrap();
        quadratic_step(&mut opt, &mut s);
        assert!((s.iter().next().unwrap().1.values()[0] - 9.5).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_drop() {
        let cfg = OptimConfig {
            lr: 1.0,
            lr_drop_step: 10,
            ..OptimConfig::default()
        };
        assert_eq!(cfg.lr_at(9), 1.0);
        assert_eq!(cfg.lr_at(10), 0.1);
    }
}
