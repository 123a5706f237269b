use alloc::vec::Vec;

use crate::math;
use crate::numerics::Tensor;

/// 2-D sinusoidal encoding for a `grid_h × grid_w` token grid. The first
/// half of the channels encodes the row, the second half the column, each
/// as interleaved sin/cos pairs over normalized positions scaled to 2π.
pub fn spatial_encoding(grid_h: usize, grid_w: usize, d_model: usize) -> Tensor {
    let half = d_model / 2;
    let mut out = Vec::with_capacity(grid_h * grid_w * d_model);
    let tau = 2.0 * core::f64::consts::PI;
    let channel = |pos: f64, extent: usize, k: usize| {
        let p = (pos + 0.5) / extent as f64 * tau;
        let freq = math::pow(10000.0, (2 * (k / 2)) as f64 / half as f64);
        if k % 2 == 0 {
            math::sin(p / freq)
        } else {
            math::cos(p / freq)
        }
    };
    for y in 0..grid_h {
        for x in 0..grid_w {
            for k in 0..half {
                out.push(channel(y as f64, grid_h, k));
            }
            for k in 0..half {
                out.push(channel(x as f64, grid_w, k));
            }
        }
    }
    Tensor::matrix(grid_h * grid_w, d_model, out).expect("encoding shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_positions_get_distinct_codes() {
        let pe = spatial_encoding(2, 2, 8);
        for a in 0..4 {
            for b in a + 1..4 {
                assert_ne!(pe.row(a), pe.row(b));
            }
        }
        assert!(pe.values().iter().all(|v| v.abs() <= 1.0));
    }
}
