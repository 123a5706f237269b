//! Versioned little-endian checkpoint files.
//!
//! Layout: magic `ATTNCKPT`, `u32` version, model config, `u64` seed,
//! `u64` optimizer step, `u8` optimizer kind, named parameter tensors,
//! then the optimizer moment buffers. Floats are stored as raw `f64`
//! bits so a save/load round trip is exact.

use std::path::Path;

use attntrack_core::model::{Model, ModelConfig};
use attntrack_core::numerics::{ParamStore, Tensor};
use attntrack_core::optim::{OptimConfig, Optimizer, OptimizerKind};

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"ATTNCKPT";
const VERSION: u32 = 1;

/// Saved optimizer buffers; paired with an [`OptimConfig`] on resume.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn of(opt: &Optimizer) -> Self {
        Self {
            kind: opt.config().kind,
            step: opt.step_count(),
            first: opt.first_moments().to_vec(),
            second: opt.second_moments().to_vec(),
        }
    }

    /// Rebuilds the optimizer with `cfg`; the optimizer kind must match.
    pub fn restore(&self, cfg: OptimConfig, params: &ParamStore) -> Result<Optimizer> {
        if cfg.kind != self.kind {
            return Err(CliError::Config("optimizer kind differs from the checkpoint".into()));
        }
        Ok(Optimizer::from_state(cfg, self.step, self.first.clone(), self.second.clone(), params)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config: ModelConfig,
    pub params: ParamStore,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn new(model: &Model, optimizer: &Optimizer, seed: u64) -> Self {
        Self {
            seed,
            config: *model.config(),
            params: model.params().clone(),
            optimizer: OptimizerState::of(optimizer),
        }
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::from_params(self.config, &self.params)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        let c = &self.config;
        for v in [c.d_model, c.n_heads, c.n_enc_layers, c.n_dec_layers, c.n_object_queries, c.patch_size, c.n_classes, c.ffn_dim] {
            w.u64(v as u64);
        }
        w.u8(c.aux_loss as u8);
        w.u64(self.seed);
        w.u64(self.optimizer.step);
        w.u8(match self.optimizer.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 1,
        });
        w.u32(self.params.len() as u32);
        for (name, t) in self.params.iter() {
            w.u32(name.len() as u32);
            w.0.extend_from_slice(name.as_bytes());
            w.u32(t.shape().len() as u32);
            for &d in t.shape() {
                w.u64(d as u64);
            }
            w.f64s(t.values());
        }
        for bufs in [&self.optimizer.first, &self.optimizer.second] {
            w.u32(bufs.len() as u32);
            for b in bufs {
                w.u64(b.len() as u64);
                w.f64s(b);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.fail("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(&format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 8];
        for d in &mut dims {
            *d = r.u64()? as usize;
        }
        let config = ModelConfig {
            d_model: dims[0],
            n_heads: dims[1],
            n_enc_layers: dims[2],
            n_dec_layers: dims[3],
            n_object_queries: dims[4],
            patch_size: dims[5],
            n_classes: dims[6],
            ffn_dim: dims[7],
            aux_loss: r.u8()? != 0,
        };
        let seed = r.u64()?;
        let step = r.u64()?;
        let kind = match r.u8()? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::Adam,
            k => return Err(r.fail(&format!("unknown optimizer kind {k}"))),
        };
        let n = r.u32()? as usize;
        let mut params = ParamStore::default();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.fail("parameter name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.fail("tensor too large"))?;
            let values = r.f64s(count)?;
            let t = Tensor::new(shape, values).map_err(|e| r.fail(&e.to_string()))?;
            params.add(name, t);
        }
        let mut moments = Vec::new();
        for _ in 0..2 {
            let k = r.u32()? as usize;
            let mut bufs = Vec::with_capacity(k);
            for _ in 0..k {
                let len = r.u64()? as usize;
                bufs.push(r.f64s(len)?);
            }
            moments.push(bufs);
        }
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        let second = moments.pop().expect("two buffers");
        let first = moments.pop().expect("two buffers");
        let ck = Self {
            seed,
            config,
            params,
            optimizer: OptimizerState { kind, step, first, second },
        };
        ck.model().map_err(|e| CliError::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: &str) -> CliError {
        CliError::Checkpoint {
            path: self.path.to_path_buf(),
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| self.fail("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.fail("tensor too large"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
