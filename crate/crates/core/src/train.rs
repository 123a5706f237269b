//! Training loop over annotated sequences.
//!
//! Each sample draws a frame `t` and walks back through the sampling range
//! to build a chain of `chain_len` frames ending at `t`. With probability
//! `sim_prob` the sample is instead a pair of two crops of frame `t`. An
//! update averages the losses of `batch_size` samples. The step's
//! randomness comes from a generator seeded by `(seed, step)`, so a resumed
//! run continues exactly where it stopped.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{sample_prev_frame, simulate_pair, AugmentConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::loss::{chain_loss, AnnotatedFrame, LossBreakdown, LossConfig, LossValues};
use crate::model::Model;
use crate::numerics::Graph;
use crate::optim::{OptimConfig, Optimizer};
use crate::sequence::SequenceGT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub optim: OptimConfig,
    /// Chance a step trains on a pair simulated from a single frame.
    pub sim_prob: f64,
    /// Frames per training sample; 2 is the plain two-step objective.
    pub chain_len: usize,
    /// Samples averaged into each update.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            optim: OptimConfig::default(),
            sim_prob: 0.0,
            chain_len: 2,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.augment.validate()?;
        self.optim.validate()?;
        if !(0.0..=1.0).contains(&self.sim_prob) {
            return Err(Error::Config("sim_prob must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.chain_len < 2 {
            return Err(Error::Config("chain_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// Loss values of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based index of the update.
    pub step: u64,
    pub loss: LossValues,
}

/// Annotated frames to train on.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub frames: &'a [Image],
    pub gt: &'a SequenceGT,
}

impl TrainingData<'_> {
    fn validate(&self) -> Result<()> {
        if self.frames.len() != self.gt.len() {
            return Err(Error::Input(alloc::format!(
                "{} frames but {} annotated frames",
                self.frames.len(),
                self.gt.len()
            )));
        }
        if self.frames.len() < 2 {
            return Err(Error::Input("training needs at least two frames".into()));
        }
        self.gt.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    optimizer: Optimizer,
    cfg: TrainConfig,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizer = Optimizer::new(cfg.optim, model.params())?;
        Ok(Self { model, optimizer, cfg })
    }

    /// Continues from a saved model and optimizer state.
    pub fn resume(model: Model, optimizer: Optimizer, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { model, optimizer, cfg })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn into_parts(self) -> (Model, Optimizer) {
        (self.model, self.optimizer)
    }

    pub fn steps_done(&self) -> u64 {
        self.optimizer.step_count()
    }

    fn step_rng(&self) -> ChaCha8Rng {
        let s = self.optimizer.step_count();
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ s)
    }

    /// One forward, backward and update over `batch_size` samples, whose
    /// losses are averaged. Non-finite losses or gradients abort with
    /// [`Error::NonFinite`] and leave the parameters untouched.
    pub fn step(&mut self, data: TrainingData<'_>) -> Result<StepRecord> {
        data.validate()?;
        let mut rng = self.step_rng();
        let mut g = Graph::new();
        let mut total = None;
        let mut sum = LossValues::default();
        for _ in 0..self.cfg.batch_size {
            let loss = self.sample_loss(&mut g, data, &mut rng)?;
            let v = loss.values(&g)?;
            sum.total += v.total;
            sum.cls += v.cls;
            sum.l1 += v.l1;
            sum.giou += v.giou;
            total = Some(match total {
                Some(t) => g.add(t, loss.total)?,
                None => loss.total,
            });
        }
        let b = self.cfg.batch_size as f64;
        let total = total.ok_or(Error::Config("batch_size must be at least 1".into()))?;
        let mean = g.scale(total, 1.0 / b)?;
        g.backward(mean)?;
        let params = self.model.params_mut();
        params.zero_grad();
        g.accumulate_into(params)?;
        if !params.grad_norm().is_finite() {
            params.zero_grad();
            return Err(Error::NonFinite("gradient"));
        }
        self.optimizer.step(params)?;
        Ok(StepRecord {
            step: self.optimizer.step_count(),
            loss: LossValues {
                total: sum.total / b,
                cls: sum.cls / b,
                l1: sum.l1 / b,
                giou: sum.giou / b,
            },
        })
    }

    /// Records the loss of one sampled chain, or of a pair simulated from
    /// a single frame, on `g`.
    fn sample_loss(&self, g: &mut Graph, data: TrainingData<'_>, rng: &mut ChaCha8Rng) -> Result<LossBreakdown> {
        let n = data.frames.len();
        let t = rng.random_range(0..n);
        if self.cfg.sim_prob > 0.0 && rng.random_bool(self.cfg.sim_prob) && !data.gt.frames[t].is_empty() {
            let sim = simulate_pair(&data.frames[t], &data.gt.frames[t], &self.cfg.augment, rng)?;
            let chain = [
                AnnotatedFrame { image: &sim.prev, gt: &sim.prev_gt },
                AnnotatedFrame { image: &sim.curr, gt: &sim.curr_gt },
            ];
            return Ok(chain_loss(&self.model, g, &chain, &self.cfg.loss, &self.cfg.augment, rng)?.total);
        }
        let mut idx = alloc::vec![t];
        while idx.len() < self.cfg.chain_len {
            let p = sample_prev_frame(idx[idx.len() - 1], n, &self.cfg.augment, rng)?;
            idx.push(p);
        }
        idx.reverse();
        let chain: Vec<AnnotatedFrame<'_>> = idx
            .iter()
            .map(|&k| AnnotatedFrame {
                image: &data.frames[k],
                gt: &data.gt.frames[k],
            })
            .collect();
        Ok(chain_loss(&self.model, g, &chain, &self.cfg.loss, &self.cfg.augment, rng)?.total)
    }

    /// Runs until `cfg.steps` updates have been applied in total, calling
    /// `log` after each one.
    pub fn run(&mut self, data: TrainingData<'_>, mut log: impl FnMut(&StepRecord)) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        while self.optimizer.step_count() < self.cfg.steps {
            let r = self.step(data)?;
            log(&r);
            records.push(r);
        }
        Ok(records)
    }
}
