#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use varad_core::autoregressor::{BlockConfig, PredictorConfig, PredictorParams};
use varad_core::pipeline::{Model, ModelConfig, ModelSpec};
use varad_core::rng::{stream, Stream};
use varad_core::sequencer::TokenGrid;
use varad_core::ssm::SsmLayerParams;
use varad_core::tokenizer::{HierarchySpec, TokenizerConfig, TokenizerMode};
use varad_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, Stream::Aux, 0)
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix<f64> {
    Matrix::uniform(rows, cols, scale, rng)
}

pub fn block_config(c: usize, p: usize) -> BlockConfig {
    BlockConfig {
        d_model: c,
        expand: 2,
        d_conv: 4,
        state_size: p,
    }
}

/// Step sizes spread over `[0.1, 1]` instead of the small init range, so the
/// `a_log` and `w_delta` gradients are not dwarfed by rounding noise.
pub fn widen_steps<R: Rng>(ssm: &mut SsmLayerParams<f64>, rng: &mut R) {
    let d_in = ssm.d_in();
    ssm.b_delta = Matrix::from_fn(1, d_in, |_, _| {
        let dt: f64 = rng.random_range(0.1..1.0);
        dt.exp_m1().ln()
    });
    ssm.w_delta = random_matrix(d_in, d_in, 0.5 / (d_in as f64).sqrt(), rng);
}

/// Predictor with every tensor perturbed away from its structured init, so
/// no gradient is identically zero by construction.
pub fn toy_predictor(c: usize, p: usize, n_layers: usize, max_offset: usize, seed: u64) -> PredictorParams<f64> {
    let mut r = rng(seed);
    let mut params = PredictorParams::init(
        PredictorConfig {
            block: block_config(c, p),
            n_layers,
            max_offset,
        },
        &mut r,
    );
    params.bos = random_matrix(max_offset, c, 0.5, &mut r);
    params.eos = random_matrix(max_offset, c, 0.5, &mut r);
    for b in &mut params.blocks {
        b.norm = Matrix::from_fn(1, c, |_, _| 1.0 + r.random_range(-0.2..0.2));
        b.out_proj.bias = random_matrix(1, c, 0.1, &mut r);
        b.ssm.b_b = random_matrix(1, p, 0.1, &mut r);
        b.ssm.b_c = random_matrix(1, p, 0.1, &mut r);
        widen_steps(&mut b.ssm, &mut r);
    }
    params
}

/// Imported-token model over the given grid shapes.
pub fn toy_spec(c: usize, p: usize, n_layers: usize, m: usize, shapes: &[(usize, usize)]) -> ModelSpec {
    ModelSpec {
        tokenizer: TokenizerConfig {
            mode: TokenizerMode::Imported,
            hierarchies: shapes
                .iter()
                .map(|_| HierarchySpec {
                    downsample: 1,
                    layer: None,
                })
                .collect(),
            channels: c,
            ..TokenizerConfig::default()
        },
        model: ModelConfig {
            n_layers,
            expand: 2,
            d_conv: 4,
            state_size: p,
            ..ModelConfig::default()
        },
        prediction_step: m,
        grid_shapes: shapes.to_vec(),
    }
}

pub fn toy_model(spec: ModelSpec, seed: u64) -> Model<f64> {
    let mut model = Model::<f64>::new(spec, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    model.randomize_adapters(0.2, &mut r);
    for p in &mut model.params.predictors {
        let (rows, c) = p.bos.shape();
        p.bos = random_matrix(rows, c, 0.5, &mut r);
        p.eos = random_matrix(rows, c, 0.5, &mut r);
        for b in &mut p.blocks {
            widen_steps(&mut b.ssm, &mut r);
        }
    }
    model
}

pub fn random_grids(spec: &ModelSpec, seed: u64) -> Vec<TokenGrid<f64>> {
    let mut r = rng(seed);
    spec.grid_shapes
        .iter()
        .map(|&(h, w)| TokenGrid::new(random_matrix(h * w, spec.channels(), 1.0, &mut r), h, w).unwrap())
        .collect()
}
