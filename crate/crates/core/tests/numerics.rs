use attntrack_core::numerics::finite_difference_check;
use attntrack_core::{Graph, Result, Tensor, Var};
use proptest::prelude::*;

const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

/// `sum(f(x) ⊙ w)` for a fixed weight pattern, so every output entry
/// contributes with a distinct factor.
fn weighted(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let w = g.constant(&w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check(x: &Tensor, f: impl Fn(&mut Graph, Var) -> Result<Var>) -> f64 {
    finite_difference_check(|g, v| {
        let y = f(g, v)?;
        weighted(g, y)
    }, x, H)
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_gradients(x in matrix(3, 4, -2.0, 2.0), b in matrix(4, 2, -2.0, 2.0)) {
        assert!(check(&x, |g, v| { let c = g.constant(&b); g.matmul(v, c) }) < TOL);
        assert!(check(&b, |g, v| { let c = g.constant(&x); g.matmul(c, v) }) < TOL);
    }

    #[test]
    fn matmul_nt_gradients(x in matrix(3, 4, -2.0, 2.0), b in matrix(2, 4, -2.0, 2.0)) {
        assert!(check(&x, |g, v| { let c = g.constant(&b); g.matmul_nt(v, c) }) < TOL);
        assert!(check(&b, |g, v| { let c = g.constant(&x); g.matmul_nt(c, v) }) < TOL);
    }

    #[test]
    fn elementwise_gradients(x in matrix(2, 3, 0.5, 2.0), y in matrix(2, 3, 0.5, 2.0)) {
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.add(v, c) }) < TOL);
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.sub(c, v) }) < TOL);
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.mul(v, c) }) < TOL);
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.div(c, v) }) < TOL);
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.div(v, c) }) < TOL);
        assert!(check(&x, |g, v| g.scale(v, -1.7)) < TOL);
        assert!(check(&x, |g, v| g.offset(v, 0.3)) < TOL);
        assert!(check(&x, |g, v| g.sigmoid(v)) < TOL);
        assert!(check(&x, |g, v| g.ln_clamped(v, 1e-3)) < TOL);
    }

    #[test]
    fn piecewise_gradients_away_from_kinks(x in matrix(2, 3, -2.0, 2.0), y in matrix(2, 3, -2.0, 2.0)) {
        let away = x.values().iter().all(|v| v.abs() > 1e-3)
            && x.values().iter().zip(y.values()).all(|(a, b)| (a - b).abs() > 1e-3);
        prop_assume!(away);
        assert!(check(&x, |g, v| g.relu(v)) < TOL);
        assert!(check(&x, |g, v| g.abs(v)) < TOL);
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.min(v, c) }) < TOL);
        assert!(check(&x, |g, v| { let c = g.constant(&y); g.max(v, c) }) < TOL);
    }

    #[test]
    fn softmax_and_layer_norm_gradients(x in matrix(3, 4, -3.0, 3.0), gain in matrix(1, 4, 0.5, 1.5), bias in matrix(1, 4, -1.0, 1.0)) {
        assert!(check(&x, |g, v| g.softmax(v, 1)) < TOL);
        assert!(check(&x, |g, v| g.softmax(v, 0)) < TOL);
        let gn = gain.clone().reshaped(vec![4]).unwrap();
        let bs = bias.clone().reshaped(vec![4]).unwrap();
        assert!(check(&x, |g, v| { let a = g.constant(&gn); let b = g.constant(&bs); g.layer_norm(v, a, b) }) < TOL);
        assert!(check(&gn, |g, v| { let a = g.constant(&x); let b = g.constant(&bs); g.layer_norm(a, v, b) }) < TOL);
    }

    #[test]
    fn structural_gradients(x in matrix(4, 3, -2.0, 2.0), r in matrix(1, 3, -1.0, 1.0)) {
        let row = r.clone().reshaped(vec![3]).unwrap();
        assert!(check(&x, |g, v| { let c = g.constant(&row); g.add_row(v, c) }) < TOL);
        assert!(check(&row, |g, v| { let c = g.constant(&x); g.add_row(c, v) }) < TOL);
        assert!(check(&x, |g, v| g.slice_cols(v, 1, 2)) < TOL);
        assert!(check(&x, |g, v| g.slice_rows(v, 1, 2)) < TOL);
        assert!(check(&x, |g, v| g.gather_rows(v, &[3, 0, 3])) < TOL);
        assert!(check(&x, |g, v| g.pick(v, &[0, 5, 5, 11])) < TOL);
        assert!(check(&x, |g, v| g.reshape(v, &[2, 6])) < TOL);
        assert!(check(&x, |g, v| g.concat_rows(&[v, v])) < TOL);
        assert!(check(&x, |g, v| { let a = g.slice_cols(v, 0, 1)?; g.concat_cols(&[v, a]) }) < TOL);
    }

    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-1.0f64..1.0, 12), scale in 0.0f64..=1e4) {
        let t = Tensor::matrix(3, 4, v.iter().map(|x| x * scale).collect()).unwrap();
        let mut g = Graph::no_grad();
        let x = g.constant(&t);
        let s = g.softmax(x, 1).unwrap();
        for row in g.value(s).chunks(4) {
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_is_associative(a in matrix(3, 4, -2.0, 2.0), b in matrix(4, 2, -2.0, 2.0), c in matrix(2, 5, -2.0, 2.0)) {
        let mut g = Graph::no_grad();
        let (va, vb, vc) = (g.constant(&a), g.constant(&b), g.constant(&c));
        let ab = g.matmul(va, vb).unwrap();
        let left = g.matmul(ab, vc).unwrap();
        let bc = g.matmul(vb, vc).unwrap();
        let right = g.matmul(va, bc).unwrap();
        for (l, r) in g.value(left).iter().zip(g.value(right)) {
            prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()));
        }
    }
}
