mod common;

use varad_core::autoregressor::{
    block_backward, block_forward, block_infer, predictor_backward, predictor_forward, predictor_infer,
    MambaBlockParams,
};
use varad_core::gradcheck::grad_check;
use varad_core::params::zeros_like;
use varad_core::pipeline::{loss, loss_and_grad, ModelParams};
use varad_core::tokenizer::{adapt_backward, AdapterParams};
use varad_core::Matrix;

use common::{block_config, random_grids, random_matrix, rng, toy_model, toy_predictor, toy_spec, widen_steps};

const EPS: f64 = 1e-5;
const C: usize = 8;
const P: usize = 4;
const L: usize = 24;

fn weighted(y: &Matrix<f64>, w: &Matrix<f64>) -> f64 {
    y.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
}

#[test]
fn adapter_gradient() {
    let mut r = rng(21);
    let adapter = AdapterParams::<f64>::random(C, 0.3, &mut r);
    let x = random_matrix(L, C, 1.0, &mut r);
    let w = random_matrix(L, C, 1.0, &mut r);
    let mut grads = zeros_like(&adapter);
    adapt_backward(&x, &w, &mut grads);
    let report = grad_check(&adapter, &grads, |a| weighted(&a.apply(&x), &w), EPS);
    assert!(report.max_relative_error < 1e-7, "{report:?}");
}

#[test]
fn mamba_block_gradient() {
    let mut r = rng(22);
    let mut block = MambaBlockParams::<f64>::init(block_config(C, P), &mut r);
    block.norm = Matrix::from_fn(1, C, |_, j| 1.0 + 0.05 * j as f64);
    block.ssm.b_b = random_matrix(1, P, 0.2, &mut r);
    block.ssm.b_c = random_matrix(1, P, 0.2, &mut r);
    widen_steps(&mut block.ssm, &mut r);
    let u = random_matrix(L, C, 1.0, &mut r);
    let w = random_matrix(L, C, 1.0, &mut r);
    let (_, cache) = block_forward(&block, &u).unwrap();
    let mut grads = zeros_like(&block);
    let du = block_backward(&block, &cache, &w, &mut grads).unwrap();

    let report = grad_check(&block, &grads, |b| weighted(&block_infer(b, &u).unwrap(), &w), EPS);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
    let report = grad_check(&u, &du, |x| weighted(&block_infer(&block, x).unwrap(), &w), EPS);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn predictor_gradient() {
    let mut r = rng(23);
    let m = 3;
    let predictor = toy_predictor(C, P, 2, 4, 23);
    let x = random_matrix(L, C, 1.0, &mut r);
    let w = random_matrix(L + m, C, 1.0, &mut r);
    let (_, cache) = predictor_forward(&predictor, &x, m).unwrap();
    let mut grads = zeros_like(&predictor);
    let dx = predictor_backward(&predictor, &cache, &w, &mut grads).unwrap();

    let report = grad_check(
        &predictor,
        &grads,
        |p| weighted(&predictor_infer(p, &x, m).unwrap(), &w),
        EPS,
    );
    assert!(report.max_relative_error < 1e-4, "{report:?}");
    let report = grad_check(
        &x,
        &dx,
        |xp| weighted(&predictor_infer(&predictor, xp, m).unwrap(), &w),
        EPS,
    );
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

fn check_full_loss(share: bool) {
    // 4×6 grid: L = 24 tokens per direction
    let mut spec = toy_spec(C, P, 2, 1, &[(4, 6), (2, 3)]);
    spec.model.share_predictor = share;
    let model = toy_model(spec.clone(), 24);
    let grids = random_grids(&spec, 25);
    let (value, grads) = loss_and_grad(&model, &grids).unwrap();
    assert_eq!(value, loss(&model, &grids).unwrap());

    let probe = |params: &ModelParams<f64>| {
        let mut m = model.clone();
        m.params = params.clone();
        loss(&m, &grids).unwrap()
    };
    let report = grad_check(&model.params, &grads, probe, EPS);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn full_loss_gradient() {
    check_full_loss(false);
}

#[test]
fn full_loss_gradient_with_shared_predictor() {
    check_full_loss(true);
}
