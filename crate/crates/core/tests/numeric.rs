use std::rc::Rc;

use kgat_core::numeric::{adam_step, grad_check, AdamConfig, AdamState, SparseRows};
use kgat_core::{Matrix, NumericError, Tape, Var};
use proptest::prelude::*;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d))
}

fn shaped(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Weighted sum so every output entry gets a distinct upstream gradient.
fn probe(tape: &mut Tape, out: Var) -> Result<Var, NumericError> {
    let (r, c) = tape.value(out).shape();
    let w: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.17 * i as f64 - 0.05 * (i * i % 7) as f64).collect();
    let w = tape.constant(Matrix::from_vec(r, c, w));
    let prod = tape.hadamard(out, w)?;
    tape.sum(prod)
}

fn check<F>(x: &Matrix, f: F) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumericError>,
{
    grad_check(|t, v| { let out = f(t, v)?; probe(t, out) }, x, EPS).unwrap()
}

/// Moves entries away from the relu kink so central differences stay valid.
fn away_from_zero(m: &Matrix) -> Matrix {
    m.map(|x| if x.abs() < 0.05 { x + 0.1 } else { x })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(m in shaped(6), shift in -500.0f64..500.0) {
        let s = m.map(|x| x * 50.0 + shift).softmax_rows();
        for r in 0..s.rows() {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5)
            .prop_flat_map(|(m, n, p, q)| (matrix(m, n), matrix(n, p), matrix(p, q)))
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn transpose_is_an_involution(m in shaped(6)) {
        prop_assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn sparse_matches_dense(m in shaped(5), seed in 0u64..1000) {
        let rows: Vec<Vec<(usize, f64)>> = (0..4)
            .map(|r| (0..m.rows()).filter(|c| (seed + (r * 7 + c * 3) as u64) % 3 != 0)
                .map(|c| (c, (r + c) as f64 * 0.25 - 0.5)).collect())
            .collect();
        let s = SparseRows::new(m.rows(), rows);
        prop_assert!(s.mul_dense(&m).unwrap().max_abs_diff(&s.to_dense().matmul(&m).unwrap()) < 1e-12);
    }

    #[test]
    fn grad_matmul(
        (a, b) in (1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(m, n, p)| (matrix(m, n), matrix(n, p)))
    ) {
        let bb = b.clone();
        let err = check(&a, move |t, x| { let w = t.constant(bb.clone()); t.matmul(x, w) });
        prop_assert!(err < TOL);
        let err = check(&b, move |t, x| { let w = t.constant(a.clone()); t.matmul(w, x) });
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_elementwise((a, b) in (1usize..4, 1usize..4).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c)))) {
        for op in 0..4 {
            let other = b.clone();
            let err = check(&a, move |t, x| {
                let y = t.constant(other.clone());
                match op {
                    0 => t.add(x, y),
                    1 => t.sub(y, x),
                    2 => t.hadamard(x, y),
                    _ => t.scale(x, -1.7),
                }
            });
            prop_assert!(err < TOL, "op {}: {}", op, err);
        }
    }

    #[test]
    fn grad_add_row((a, row) in (1usize..4, 1usize..4).prop_flat_map(|(r, c)| (matrix(r, c), matrix(1, c)))) {
        let aa = a.clone();
        let err = check(&row, move |t, x| { let m = t.constant(aa.clone()); t.add_row(m, x) });
        prop_assert!(err < TOL);
        let err = check(&a, move |t, x| { let r = t.constant(row.clone()); t.add_row(x, r) });
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_shape_ops(m in (2usize..5, 2usize..5).prop_flat_map(|(r, c)| matrix(r, c))) {
        let (r, c) = m.shape();
        prop_assert!(check(&m, |t, x| t.transpose(x)) < TOL);
        prop_assert!(check(&m, |t, x| t.mean_rows(x)) < TOL);
        prop_assert!(check(&m, move |t, x| t.slice_cols(x, 1, c)) < TOL);
        prop_assert!(check(&m, move |t, x| t.select_rows(x, &[r - 1, 0, r - 1])) < TOL);
        prop_assert!(check(&m, |t, x| t.concat_cols(x, x)) < TOL);
        let err = check(&m, |t, x| { let y = t.scale(x, 2.0)?; t.stack_rows(&[x, y, x]) });
        prop_assert!(err < TOL);
        prop_assert!(check(&m, |t, x| t.sum(x)) < TOL);
    }

    #[test]
    fn grad_nonlinear(m in shaped(4)) {
        prop_assert!(check(&away_from_zero(&m), |t, x| t.relu(x)) < TOL);
        prop_assert!(check(&m, |t, x| t.softmax_rows(x)) < TOL);
    }

    #[test]
    fn grad_sparse_left(m in (2usize..5, 1usize..4).prop_flat_map(|(r, c)| matrix(r, c))) {
        let n = m.rows();
        let s = Rc::new(SparseRows::new(n, vec![vec![(0, 0.5), (n - 1, -1.25)], vec![], vec![(1, 2.0)]]));
        prop_assert!(check(&m, move |t, x| t.sparse_left(Rc::clone(&s), x)) < TOL);
    }

    #[test]
    fn grad_cross_entropy(m in (1usize..5, 2usize..4).prop_flat_map(|(r, c)| matrix(r, c))) {
        let targets: Vec<usize> = (0..m.rows()).map(|i| i % m.cols()).collect();
        let err = grad_check(move |t, x| t.cross_entropy(x, &targets), &m, EPS).unwrap();
        prop_assert!(err < TOL);
    }

    #[test]
    fn grad_reversal_scales_gradient(m in shaped(4), lambda in 0.0f64..3.0) {
        let mut tape = Tape::new();
        let x = tape.param(m.clone());
        let r = tape.grad_reverse(x, lambda).unwrap();
        let out = probe(&mut tape, r).unwrap();
        let g = tape.backward(out).unwrap().get(x).unwrap().clone();
        let mut plain = Tape::new();
        let y = plain.param(m);
        let out = probe(&mut plain, y).unwrap();
        let h = plain.backward(out).unwrap().get(y).unwrap().clone();
        prop_assert!(g.max_abs_diff(&h.scale(-lambda)) < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_identity(m in shaped(4), steps in 1usize..6) {
        let mut p = m.clone();
        let mut state = AdamState::new(m.shape(), AdamConfig::with_learning_rate(0.1));
        for _ in 0..steps {
            adam_step(&mut p, &Matrix::zeros(m.rows(), m.cols()), &mut state).unwrap();
        }
        prop_assert_eq!(p, m);
    }
}

#[test]
fn composed_network_gradient() {
    let w1 = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
    let w2 = Matrix::from_vec(4, 2, (0..8).map(|i| (i as f64 * 0.71).cos()).collect());
    let x = Matrix::from_vec(5, 3, (0..15).map(|i| (i as f64 * 0.13).sin() * 2.0).collect());
    let (w1c, w2c) = (w1.clone(), w2.clone());
    let net = move |t: &mut Tape, input: Var, which: usize| -> Result<Var, NumericError> {
        let xs = [t.constant(x.clone()), t.constant(w1c.clone()), t.constant(w2c.clone())];
        let pick = |i: usize| if i == which { input } else { xs[i] };
        let h = t.matmul(pick(0), pick(1))?;
        let h = t.relu(h)?;
        let z = t.matmul(h, pick(2))?;
        t.cross_entropy(z, &[0, 1, 1, 0, 1])
    };
    let net = Rc::new(net);
    for (i, m) in [(1, &w1), (2, &w2)] {
        let f = Rc::clone(&net);
        let err = grad_check(move |t, v| f(t, v, i), m, EPS).unwrap();
        assert!(err < TOL, "param {i}: {err}");
    }
}
