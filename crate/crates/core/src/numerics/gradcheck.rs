use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Largest `|analytic - numeric| / max(1, |numeric|)` over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Central differences of `eval` at the flat coordinates `coords` of `x`.
pub fn central_differences<F>(mut eval: F, x: &Tensor, coords: &[usize], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    coords
        .iter()
        .map(|&i| {
            let base = *x.values().get(i).ok_or(Error::Index { index: i, len: x.len() })?;
            probe.set(i, base + h)?;
            let up = eval(&probe)?;
            probe.set(i, base - h)?;
            let down = eval(&probe)?;
            probe.set(i, base)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Compares the reverse-mode gradient of the scalar function `f` at `x`
/// with central differences of step `h` over every coordinate, returning
/// the maximum relative error.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let leaf = g.leaf(x);
    let out = f(&mut g, leaf)?;
    g.backward(out)?;
    let analytic = match g.grad(leaf) {
        Some(d) => d.to_vec(),
        None => alloc::vec![0.0; x.len()],
    };
    let coords: Vec<usize> = (0..x.len()).collect();
    let numeric = central_differences(
        |probe| {
            let mut g = Graph::no_grad();
            let v = g.constant(probe);
            let out = f(&mut g, v)?;
            g.scalar(out)
        },
        x,
        &coords,
        h,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}
