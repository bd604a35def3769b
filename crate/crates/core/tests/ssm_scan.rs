mod common;

use proptest::prelude::*;
use rand::Rng;
use varad_core::gradcheck::grad_check;
use varad_core::ssm::{
    discretize, naive_unroll, scan, scan_backward, scan_forward, scan_with_state, SsmLayerParams, SsmState,
};
use varad_core::Matrix;

use common::{random_matrix, rng};

fn random_layer<R: Rng>(d_in: usize, p: usize, r: &mut R) -> SsmLayerParams<f64> {
    let mut layer = SsmLayerParams::init(d_in, p, r);
    layer.a_log = Matrix::from_fn(d_in, p, |_, _| r.random_range(-2.0..2.0));
    layer.b_b = random_matrix(1, p, 0.5, r);
    layer.b_c = random_matrix(1, p, 0.5, r);
    layer.d_skip = random_matrix(1, d_in, 1.0, r);
    layer
}

fn relative_error(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(1e-300)
}

#[test]
fn scan_matches_naive_unroll_on_random_instances() {
    let mut r = rng(11);
    for _ in 0..100 {
        let len = r.random_range(1..=64);
        let d_in = r.random_range(1..=8);
        let p = r.random_range(1..=8);
        let layer = random_layer(d_in, p, &mut r);
        let x = random_matrix(len, d_in, 2.0, &mut r);
        let (fast, _) = scan_forward(&layer, &x).unwrap();
        let slow = naive_unroll(&layer, &x).unwrap();
        assert!(relative_error(&fast, &slow) < 1e-12, "L={len} D={d_in} P={p}");
        assert_eq!(scan(&layer, &x).unwrap(), fast);
    }
}

#[test]
fn scan_matches_naive_unroll_in_f32() {
    let mut r = rng(12);
    for _ in 0..100 {
        let len = r.random_range(1..=64);
        let d_in = r.random_range(1..=8);
        let p = r.random_range(1..=8);
        let layer = random_layer(d_in, p, &mut r);
        let x = random_matrix(len, d_in, 2.0, &mut r);
        let reference = naive_unroll(&layer, &x).unwrap();
        let single = scan(&layer.cast::<f32>(), &x.cast::<f32>()).unwrap().cast::<f64>();
        assert!(relative_error(&single, &reference) < 1e-5);
    }
}

#[test]
fn chunked_scan_equals_one_shot() {
    let mut r = rng(13);
    let layer = random_layer(5, 6, &mut r);
    let x = random_matrix(40, 5, 1.0, &mut r);
    let whole = scan(&layer, &x).unwrap();
    let mut state = SsmState::new(5, 6);
    let a = scan_with_state(&layer, &x.slice_rows(0, 17), &mut state).unwrap();
    let b = scan_with_state(&layer, &x.slice_rows(17, 40), &mut state).unwrap();
    assert_eq!(Matrix::vstack(&a, &b), whole);
}

#[test]
fn scan_gradients_match_central_differences() {
    let mut r = rng(14);
    let layer = random_layer(4, 3, &mut r);
    let x = random_matrix(12, 4, 1.0, &mut r);
    let weight = random_matrix(12, 4, 1.0, &mut r);
    let objective = |y: &Matrix<f64>| -> f64 { y.as_slice().iter().zip(weight.as_slice()).map(|(a, b)| a * b).sum() };
    let (_, cache) = scan_forward(&layer, &x).unwrap();
    let (dx, grads) = scan_backward(&layer, &cache, &weight).unwrap();

    let report = grad_check(&layer, &grads, |p| objective(&scan(p, &x).unwrap()), 1e-5);
    assert!(report.max_relative_error < 1e-6, "{report:?}");
    let report = grad_check(&x, &dx, |xp| objective(&scan(&layer, xp).unwrap()), 1e-5);
    assert!(report.max_relative_error < 1e-6, "{report:?}");
}

#[test]
fn constant_input_state_stays_bounded() {
    let mut r = rng(15);
    for _ in 0..20 {
        let (d_in, p) = (3, 4);
        let mut layer = random_layer(d_in, p, &mut r);
        layer.freeze_selectivity();
        let x_val: Vec<f64> = (0..d_in).map(|_| r.random_range(-3.0..3.0)).collect();
        let x = Matrix::from_fn(200, d_in, |_, d| x_val[d]);
        let (_, cache) = scan_forward(&layer, &x).unwrap();
        let delta = cache.delta().row(0).to_vec();
        let b = cache.input_b().row(0).to_vec();
        let mut b_bar_norm = 0.0f64;
        let mut max_a_bar = 0.0f64;
        for (d, &dl) in delta.iter().enumerate() {
            for (q, &bq) in b.iter().enumerate() {
                let (a_bar, b_bar) = discretize(layer.a(d, q), bq, dl).unwrap();
                b_bar_norm += b_bar * b_bar;
                max_a_bar = max_a_bar.max(a_bar);
            }
        }
        let x_norm = x_val.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = b_bar_norm.sqrt() * x_norm / (1.0 - max_a_bar);
        for t in 0..x.rows() {
            let h_norm = cache.state_at(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(h_norm <= bound * (1.0 + 1e-12), "t={t}: {h_norm} > {bound}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frozen_scan_is_linear_in_input(seed in any::<u64>(), k in -6i32..6, alpha in -4.0f64..4.0) {
        let mut r = rng(seed);
        let mut layer = random_layer(3, 4, &mut r);
        layer.freeze_selectivity();
        let x = random_matrix(16, 3, 1.0, &mut r);
        let y = scan(&layer, &x).unwrap();

        // powers of two scale every intermediate exactly
        let pow2 = 2f64.powi(k);
        let scaled = scan(&layer, &x.map(|v| v * pow2)).unwrap();
        prop_assert_eq!(scaled, y.map(|v| v * pow2));

        let scaled = scan(&layer, &x.map(|v| v * alpha)).unwrap();
        prop_assert!(scaled.max_abs_diff(&y.map(|v| v * alpha)) <= 1e-12 * (1.0 + y.max_abs() * alpha.abs()));
    }

    #[test]
    fn scan_is_causal(seed in any::<u64>(), t in 0usize..20) {
        let mut r = rng(seed);
        let layer = random_layer(3, 4, &mut r);
        let x = random_matrix(20, 3, 1.0, &mut r);
        let y = scan(&layer, &x).unwrap();
        let mut x2 = x.clone();
        for row in t..20 {
            for v in x2.row_mut(row) {
                *v += 1.0;
            }
        }
        let y2 = scan(&layer, &x2).unwrap();
        prop_assert_eq!(y.slice_rows(0, t), y2.slice_rows(0, t));
    }
}
