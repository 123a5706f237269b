use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::math;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub(crate) fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), values).expect("init shape")
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Xavier-uniform weights `[fan_in × fan_out]`, zero bias.
    pub fn register(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        Self {
            w: store.add(format!("{name}.w"), uniform(rng, &[fan_in, fan_out], bound)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn register(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::new(vec![d], vec![1.0; d]).expect("gain")),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl Attention {
    pub fn register(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        Self {
            q: Linear::register(store, &format!("{name}.q"), d, d, rng),
            k: Linear::register(store, &format!("{name}.k"), d, d, rng),
            v: Linear::register(store, &format!("{name}.v"), d, d, rng),
            out: Linear::register(store, &format!("{name}.out"), d, d, rng),
            heads,
        }
    }

    /// Scaled dot-product multi-head attention of `query` rows over
    /// `key`/`value` rows.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, query: Var, key: Var, value: Var) -> Result<Var> {
        let q = self.q.forward(g, store, query)?;
        let k = self.k.forward(g, store, key)?;
        let v = self.v.forward(g, store, value)?;
        let d = g.shape(q)[1];
        let dh = d / self.heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, scale)?;
            let weights = g.softmax(scores, 1)?;
            heads.push(g.matmul(weights, vh)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        self.out.forward(g, store, joined)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn register(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            up: Linear::register(store, &format!("{name}.up"), d, hidden, rng),
            down: Linear::register(store, &format!("{name}.down"), hidden, d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(g, store, x)?;
        let h = g.relu(h)?;
        self.down.forward(g, store, h)
    }
}

/// Post-norm self-attention block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EncoderLayer {
    attn: Attention,
    norm1: Norm,
    ffn: FeedForward,
    norm2: Norm,
}

impl EncoderLayer {
    pub fn register(store: &mut ParamStore, name: &str, d: usize, heads: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            attn: Attention::register(store, &format!("{name}.attn"), d, heads, rng),
            norm1: Norm::register(store, &format!("{name}.norm1"), d),
            ffn: FeedForward::register(store, &format!("{name}.ffn"), d, hidden, rng),
            norm2: Norm::register(store, &format!("{name}.norm2"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let a = self.attn.forward(g, store, x, x, x)?;
        let x = g.add(x, a)?;
        let x = self.norm1.forward(g, store, x)?;
        let f = self.ffn.forward(g, store, x)?;
        let x = g.add(x, f)?;
        self.norm2.forward(g, store, x)
    }
}

/// Self-attention over all queries, cross-attention to the frame memory,
/// feed-forward. `pos` is added to the attention queries and keys of the
/// self-attention and to the queries of the cross-attention.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderLayer {
    self_attn: Attention,
    norm1: Norm,
    cross_attn: Attention,
    norm2: Norm,
    ffn: FeedForward,
    norm3: Norm,
}

impl DecoderLayer {
    pub fn register(store: &mut ParamStore, name: &str, d: usize, heads: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            self_attn: Attention::register(store, &format!("{name}.self"), d, heads, rng),
            norm1: Norm::register(store, &format!("{name}.norm1"), d),
            cross_attn: Attention::register(store, &format!("{name}.cross"), d, heads, rng),
            norm2: Norm::register(store, &format!("{name}.norm2"), d),
            ffn: FeedForward::register(store, &format!("{name}.ffn"), d, hidden, rng),
            norm3: Norm::register(store, &format!("{name}.norm3"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, tgt: Var, pos: Var, memory: Var) -> Result<Var> {
        let qk = g.add(tgt, pos)?;
        let a = self.self_attn.forward(g, store, qk, qk, tgt)?;
        let t = g.add(tgt, a)?;
        let t = self.norm1.forward(g, store, t)?;
        let q = g.add(t, pos)?;
        let c = self.cross_attn.forward(g, store, q, memory, memory)?;
        let t = g.add(t, c)?;
        let t = self.norm2.forward(g, store, t)?;
        let f = self.ffn.forward(g, store, t)?;
        let t = g.add(t, f)?;
        self.norm3.forward(g, store, t)
    }
}

pub(crate) fn layer_name(prefix: &str, i: usize) -> String {
    format!("{prefix}.{i}")
}
