use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    LnClamped(Var, f64),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Sum(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
    // Only leaves keep gradients between backward passes.
    grad: Option<Vec<f64>>,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape
/// is already topologically sorted and `backward` walks it in reverse.
///
/// Gradients of leaves accumulate across repeated `backward` calls until
/// [`Graph::zero_grad`] is called. Intermediate gradients are transient.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    track_grad: bool,
    bound: Vec<Option<Var>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

const LN_EPS: f64 = 1e-5;

fn check_finite(values: &[f64], op: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[..shape.len() - 1].iter().product(), shape[shape.len() - 1]),
    }
}

// out[m×n] += a[m×k] · b[k×n]
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = dst.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

impl Graph {
    /// A graph that records gradients for bound parameters.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            track_grad: true,
            bound: Vec::new(),
        }
    }

    /// A graph for inference: parameters are bound as constants and no
    /// backward pass is possible through them.
    pub fn no_grad() -> Self {
        Self {
            track_grad: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        check_finite(&value, name)?;
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("graph nodes hold valid tensors")
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.value(v) {
            [x] => Ok(*x),
            _ => Err(Error::shape("scalar", "node is not a scalar")),
        }
    }

    /// Gradient accumulated on a leaf, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Records a constant input. No gradient is tracked for it.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.values().to_vec(),
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf whose gradient is tracked (when the graph tracks
    /// gradients at all).
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let v = self.constant(t);
        self.nodes[v.0].requires_grad = self.track_grad;
        v
    }

    /// Binds a stored parameter as a leaf. Binding the same id twice yields
    /// the same node, so a graph must only ever see one store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let slot = id.index();
        if slot >= self.bound.len() {
            self.bound.resize(slot + 1, None);
        }
        if let Some(v) = self.bound[slot] {
            return v;
        }
        let v = self.leaf(store.get(id));
        self.bound[slot] = Some(v);
        v
    }

    /// Adds the gradients of all bound parameters into the store.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for (slot, var) in self.bound.iter().enumerate() {
            if let Some(g) = var.and_then(|v| self.grad(v)) {
                store.get_mut(ParamId::from_index(slot)).accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        self.push(vec![m, n], out, Op::MatMul(a, b), rg, "matmul")
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::shape("matmul_nt", format!("{:?} x {:?}ᵀ", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        gemm_nt(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        self.push(vec![m, n], out, Op::MatMulNt(a, b), rg, "matmul_nt")
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        self.push(shape, out, op, rg, name)
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        self.push(shape, out, op, rg, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    /// Element-wise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "min", |x, y| if x <= y { x } else { y }, Op::Min(a, b))
    }

    /// Element-wise maximum; ties route the gradient to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "max", |x, y| if x >= y { x } else { y }, Op::Max(a, b))
    }

    /// Adds a bias vector of length `cols` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, n) = dims2(self.shape(a));
        if self.value(row).len() != n {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", self.shape(a), self.shape(row))));
        }
        let r = self.value(row);
        let out = self
            .value(a)
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, row]);
        self.push(shape, out, Op::AddRow(a, row), rg, "add_row")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary(a, "scale", |x| x * s, Op::Scale(a, s))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "offset", |x| x + c, Op::Offset(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "relu", |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(
            a,
            "sigmoid",
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + math::exp(-x))
                } else {
                    let e = math::exp(x);
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(a),
        )
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "abs", f64::abs, Op::Abs(a))
    }

    /// `ln(max(x, floor))`. The gradient is zero where the clamp is active.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.unary(a, "ln", |x| math::ln(if x > floor { x } else { floor }), Op::LnClamped(a, floor))
    }

    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", format!("axis {} for shape {:?}", axis, shape)));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.value(a);
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| o * len * inner + k * inner + i;
                let mx = (0..len).map(|k| x[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = math::exp(x[idx(k)] - mx);
                    out[idx(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[idx(k)] /= total;
                }
            }
        }
        let rg = self.rg(&[a]);
        self.push(shape, out, Op::Softmax { x: a, outer, len, inner }, rg, "softmax")
    }

    /// Normalizes over the last axis to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (rows, n) = dims2(self.shape(x));
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::shape("layer_norm", "gain/bias must match the normalized extent"));
        }
        let xv = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let s = 1.0 / math::sqrt(var + LN_EPS);
            rstd[r] = s;
            for c in 0..n {
                let h = (row[c] - mean) * s;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, gain, bias]);
        self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
            "layer_norm",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(vec![1], vec![s], Op::Sum(a), rg, "sum")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, n) = dims2(self.shape(a));
        if self.shape(a).len() != 2 || len == 0 || start + len > n {
            return Err(Error::shape("slice_cols", format!("[{}, {}) of {:?}", start, start + len, self.shape(a))));
        }
        let x = self.value(a);
        let out = (0..rows).flat_map(|r| x[r * n + start..r * n + start + len].iter().copied()).collect();
        let rg = self.rg(&[a]);
        self.push(vec![rows, len], out, Op::SliceCols { x: a, start }, rg, "slice_cols")
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 || len == 0 || start + len > shape[0] {
            return Err(Error::shape("slice_rows", format!("[{}, {}) of {:?}", start, start + len, shape)));
        }
        let n = shape[1];
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        let rg = self.rg(&[a]);
        self.push(vec![len, n], out, Op::SliceRows { x: a, start }, rg, "slice_rows")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let n = self.shape(first).get(1).copied().unwrap_or(0);
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[1] != n {
                return Err(Error::shape("concat_rows", format!("{:?} vs width {}", s, n)));
            }
            rows += s[0];
            out.extend_from_slice(self.value(p));
        }
        let rg = self.rg(parts);
        self.push(vec![rows, n], out, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let rows = self.shape(first).first().copied().unwrap_or(0);
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(Error::shape("concat_cols", format!("{:?} vs rows {}", s, rows)));
            }
            width += s[1];
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let n = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[r * n..(r + 1) * n]);
            }
        }
        let rg = self.rg(parts);
        self.push(vec![rows, width], out, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Selects rows of a matrix (indices may repeat).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("gather_rows", "expected a matrix"));
        }
        if rows.is_empty() {
            return Err(Error::shape("gather_rows", "no rows selected"));
        }
        let n = shape[1];
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= shape[0] {
                return Err(Error::Index { index: r, len: shape[0] });
            }
            out.extend_from_slice(&self.value(a)[r * n..(r + 1) * n]);
        }
        let rg = self.rg(&[a]);
        self.push(vec![rows.len(), n], out, Op::GatherRows(a, rows.to_vec()), rg, "gather_rows")
    }

    /// Picks individual elements by flat index into a vector.
    pub fn pick(&mut self, a: Var, flat: &[usize]) -> Result<Var> {
        let len = self.value(a).len();
        if flat.is_empty() {
            return Err(Error::shape("pick", "no elements selected"));
        }
        if let Some(&bad) = flat.iter().find(|&&i| i >= len) {
            return Err(Error::Index { index: bad, len });
        }
        let out = flat.iter().map(|&i| self.value(a)[i]).collect();
        let rg = self.rg(&[a]);
        self.push(vec![flat.len()], out, Op::Pick(a, flat.to_vec()), rg, "pick")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::shape("reshape", format!("{:?} -> {:?}", self.shape(a), shape)));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        self.push(shape.to_vec(), out, Op::Reshape(a), rg, "reshape")
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let want = |v: &Var| self.nodes[v.0].requires_grad;
        let len = |v: &Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if want(a) {
                    add_into(&mut grads[a.0], m * k, |da| gemm_nt(g, self.value(*b), da, m, n, k));
                }
                if want(b) {
                    add_into(&mut grads[b.0], k * n, |db| gemm_tn(self.value(*a), g, db, m, k, n));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if want(a) {
                    add_into(&mut grads[a.0], m * k, |da| gemm(g, self.value(*b), da, m, n, k));
                }
                if want(b) {
                    add_into(&mut grads[b.0], n * k, |db| gemm_tn(g, self.value(*a), db, m, n, k));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                }
                if want(b) {
                    add_into(&mut grads[b.0], g.len(), |d| {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += sign * g)
                    });
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += g[k] * bv[k];
                        }
                    });
                }
                if want(b) {
                    add_into(&mut grads[b.0], g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += g[k] * av[k];
                        }
                    });
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += g[k] / bv[k];
                        }
                    });
                }
                if want(b) {
                    add_into(&mut grads[b.0], g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] -= g[k] * av[k] / (bv[k] * bv[k]);
                        }
                    });
                }
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let (av, bv) = (self.value(*a), self.value(*b));
                let pick_a = |k: usize| if is_min { av[k] <= bv[k] } else { av[k] >= bv[k] };
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            if pick_a(k) {
                                d[k] += g[k];
                            }
                        }
                    });
                }
                if want(b) {
                    add_into(&mut grads[b.0], g.len(), |d| {
                        for k in 0..g.len() {
                            if !pick_a(k) {
                                d[k] += g[k];
                            }
                        }
                    });
                }
            }
            Op::AddRow(a, row) => {
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                }
                if want(row) {
                    let n = len(row);
                    add_into(&mut grads[row.0], n, |d| {
                        for chunk in g.chunks(n) {
                            d.iter_mut().zip(chunk).for_each(|(d, g)| *d += g);
                        }
                    });
                }
            }
            Op::Scale(a, s) => {
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += s * g));
                }
            }
            Op::Offset(a) | Op::Reshape(a) => {
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                }
            }
            Op::Relu(a) => {
                if want(a) {
                    let x = self.value(*a);
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            if x[k] > 0.0 {
                                d[k] += g[k];
                            }
                        }
                    });
                }
            }
            Op::Sigmoid(a) => {
                if want(a) {
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += g[k] * y[k] * (1.0 - y[k]);
                        }
                    });
                }
            }
            Op::Abs(a) => {
                if want(a) {
                    let x = self.value(*a);
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            if x[k] > 0.0 {
                                d[k] += g[k];
                            } else if x[k] < 0.0 {
                                d[k] -= g[k];
                            }
                        }
                    });
                }
            }
            Op::LnClamped(a, floor) => {
                if want(a) {
                    let x = self.value(*a);
                    add_into(&mut grads[a.0], g.len(), |d| {
                        for k in 0..g.len() {
                            if x[k] > *floor {
                                d[k] += g[k] / x[k];
                            }
                        }
                    });
                }
            }
            Op::Softmax { x, outer, len, inner } => {
                if want(x) {
                    let (outer, len, inner) = (*outer, *len, *inner);
                    add_into(&mut grads[x.0], g.len(), |d| {
                        for o in 0..outer {
                            for i in 0..inner {
                                let idx = |k: usize| o * len * inner + k * inner + i;
                                let dot: f64 = (0..len).map(|k| g[idx(k)] * y[idx(k)]).sum();
                                for k in 0..len {
                                    d[idx(k)] += y[idx(k)] * (g[idx(k)] - dot);
                                }
                            }
                        }
                    });
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = len(gain);
                let rows = rstd.len();
                let gv = self.value(*gain);
                if want(gain) {
                    add_into(&mut grads[gain.0], n, |d| {
                        for r in 0..rows {
                            for c in 0..n {
                                d[c] += g[r * n + c] * xhat[r * n + c];
                            }
                        }
                    });
                }
                if want(bias) {
                    add_into(&mut grads[bias.0], n, |d| {
                        for r in 0..rows {
                            for c in 0..n {
                                d[c] += g[r * n + c];
                            }
                        }
                    });
                }
                if want(x) {
                    add_into(&mut grads[x.0], g.len(), |d| {
                        for r in 0..rows {
                            let base = r * n;
                            let mut mean_d = 0.0;
                            let mut mean_dh = 0.0;
                            for c in 0..n {
                                let dh = g[base + c] * gv[c];
                                mean_d += dh;
                                mean_dh += dh * xhat[base + c];
                            }
                            mean_d /= n as f64;
                            mean_dh /= n as f64;
                            for c in 0..n {
                                let dh = g[base + c] * gv[c];
                                d[base + c] += rstd[r] * (dh - mean_d - xhat[base + c] * mean_dh);
                            }
                        }
                    });
                }
            }
            Op::Sum(a) => {
                if want(a) {
                    add_into(&mut grads[a.0], len(a), |d| d.iter_mut().for_each(|d| *d += g[0]));
                }
            }
            Op::SliceCols { x, start } => {
                if want(x) {
                    let n = self.shape(*x)[1];
                    let w = node.shape[1];
                    add_into(&mut grads[x.0], len(x), |d| {
                        for r in 0..node.shape[0] {
                            for c in 0..w {
                                d[r * n + start + c] += g[r * w + c];
                            }
                        }
                    });
                }
            }
            Op::SliceRows { x, start } => {
                if want(x) {
                    let n = node.shape[1];
                    add_into(&mut grads[x.0], len(x), |d| {
                        d[start * n..start * n + g.len()]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(d, g)| *d += g)
                    });
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let l = len(p);
                    if want(p) {
                        add_into(&mut grads[p.0], l, |d| {
                            d.iter_mut().zip(&g[offset..offset + l]).for_each(|(d, g)| *d += g)
                        });
                    }
                    offset += l;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = node.shape[0];
                let width = node.shape[1];
                let mut col = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    if want(p) {
                        add_into(&mut grads[p.0], rows * w, |d| {
                            for r in 0..rows {
                                for c in 0..w {
                                    d[r * w + c] += g[r * width + col + c];
                                }
                            }
                        });
                    }
                    col += w;
                }
            }
            Op::GatherRows(a, rows) => {
                if want(a) {
                    let n = node.shape[1];
                    add_into(&mut grads[a.0], len(a), |d| {
                        for (k, &r) in rows.iter().enumerate() {
                            for c in 0..n {
                                d[r * n + c] += g[k * n + c];
                            }
                        }
                    });
                }
            }
            Op::Pick(a, flat) => {
                if want(a) {
                    add_into(&mut grads[a.0], len(a), |d| {
                        for (k, &i) in flat.iter().enumerate() {
                            d[i] += g[k];
                        }
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let id = g.constant(&t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = g.constant(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = g.matmul(id, m).unwrap();
        assert_eq!(g.value(p), &[1.0, 2.0, 3.0, 4.0]);

        let a = g.constant(&t(&[1, 2], &[1.0, 2.0]));
        let b = g.constant(&t(&[2, 1], &[3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[11.0]);

        let z = g.constant(&Tensor::zeros(&[2, 2]));
        let zc = g.matmul(z, m).unwrap();
        assert!(g.value(zc).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(&Tensor::zeros(&[2, 3]));
        let b = g.constant(&Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(&t(&[2], &[0.0, 0.0]));
        let s = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(s), &[0.5, 0.5]);

        let x = g.constant(&t(&[2], &[1000.0, 0.0]));
        let s = g.softmax(x, 0).unwrap();
        assert!((g.value(s)[0] - 1.0).abs() < 1e-12);
        assert!(g.value(s)[1] < 1e-300 || g.value(s)[1] == 0.0);

        let x = g.constant(&t(&[2], &[1.0f64.ln(), 3.0f64.ln()]));
        let s = g.softmax(x, 0).unwrap();
        assert!((g.value(s)[0] - 0.25).abs() < 1e-15);
        assert!((g.value(s)[1] - 0.75).abs() < 1e-15);

        assert!(g.softmax(x, 1).is_err());
    }

    #[test]
    fn softmax_along_first_axis() {
        let mut g = Graph::new();
        let x = g.constant(&t(&[2, 3], &[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]));
        let s = g.softmax(x, 0).unwrap();
        assert!(g.value(s).iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let ones = g.constant(&t(&[2], &[1.0, 1.0]));
        let zeros = g.constant(&t(&[2], &[0.0, 0.0]));
        let c = g.constant(&t(&[1, 2], &[3.0, 3.0]));
        let y = g.layer_norm(c, ones, zeros).unwrap();
        assert_eq!(g.value(y), &[0.0, 0.0]);

        let x = g.constant(&t(&[1, 2], &[1.0, 3.0]));
        let y = g.layer_norm(x, ones, zeros).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((g.value(y)[0] + expect).abs() < 1e-15);
        assert!((g.value(y)[1] - expect).abs() < 1e-15);

        let b = g.constant(&t(&[2], &[0.7, 0.7]));
        let y = g.layer_norm(x, zeros, b).unwrap();
        assert_eq!(g.value(y), &[0.7, 0.7]);
    }

    #[test]
    fn backward_square() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[2], &[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), Some(&[2.0, 4.0][..]));
        // repeated backward accumulates
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), Some(&[4.0, 8.0][..]));
        g.zero_grad();
        assert_eq!(g.grad(x), None);
    }

    #[test]
    fn backward_constant_loss() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[2], &[1.0, 2.0]));
        let _unused = g.scale(x, 3.0).unwrap();
        let c = g.constant(&t(&[1], &[5.0]));
        let loss = g.sum(c).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(x).map_or(true, |d| d.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(&t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(&t(&[1], &[1.0]));
        let z = g.constant(&t(&[1], &[0.0]));
        assert_eq!(g.div(a, z), Err(Error::NonFinite("div")));
    }

    #[test]
    fn no_grad_graph_tracks_nothing() {
        let mut store = ParamStore::default();
        let id = store.add("w", t(&[2], &[1.0, 2.0]));
        let mut g = Graph::no_grad();
        let w = g.param(&store, id);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(w).is_none());
    }

    #[test]
    fn param_binding_is_shared() {
        let mut store = ParamStore::default();
        let id = store.add("w", t(&[2], &[1.0, 2.0]));
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let p = g.mul(a, b).unwrap();
        let loss = g.sum(p).unwrap();
        g.backward(loss).unwrap();
        g.accumulate_into(&mut store).unwrap();
        assert_eq!(store.get(id).grad(), Some(&[2.0, 4.0][..]));
    }
}
