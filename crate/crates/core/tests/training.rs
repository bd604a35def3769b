mod common;

use rand::Rng;
use varad_core::io::checkpoint::encode_checkpoint;
use varad_core::pipeline::{Model, ModelConfig, ModelSpec};
use varad_core::sequencer::TokenGrid;
use varad_core::tokenizer::{HierarchySpec, Image, TokenizerConfig};
use varad_core::trainer::{
    adamw_step, resume_from_checkpoint, to_checkpoint, train, AdamState, TrainConfig, TrainState,
};
use varad_core::{Error, Matrix};

use common::rng;

fn toy_spec() -> ModelSpec {
    let tokenizer = TokenizerConfig {
        hierarchies: [4, 8]
            .into_iter()
            .map(|downsample| HierarchySpec {
                downsample,
                layer: None,
            })
            .collect(),
        channels: 8,
        image_size: [32, 32],
        ..TokenizerConfig::default()
    };
    let model = ModelConfig {
        n_layers: 1,
        state_size: 4,
        ..ModelConfig::default()
    };
    ModelSpec::builtin(tokenizer, model, 2)
}

/// Smooth stripes plus a little noise, normalized like a photo.
fn stripes(seed: u64) -> Image {
    let mut r = rng(seed);
    let phase: f32 = r.random_range(0.0..std::f32::consts::TAU);
    let mut data = Vec::with_capacity(3 * 32 * 32);
    for c in 0..3 {
        for i in 0..32 {
            for j in 0..32 {
                let v = 0.5 + 0.3 * ((i as f32 * 0.4 + j as f32 * 0.2 + phase + c as f32).sin());
                data.push(v + r.random_range(-0.02..0.02));
            }
        }
    }
    let mut img = Image::new(32, 32, data).unwrap();
    img.normalize(&[0.485, 0.456, 0.406], &[0.229, 0.224, 0.225]);
    img
}

fn dataset(model: &Model<f64>, n: usize) -> Vec<Vec<TokenGrid<f64>>> {
    let tok = model.tokenizer.as_ref().unwrap();
    (0..n).map(|i| tok.tokenize(&stripes(i as u64)).unwrap()).collect()
}

#[test]
fn adamw_finds_the_bottom_of_a_quadratic_bowl() {
    let target = [1.5f64, -0.25, 3.0, 0.0];
    let curvature = [1.0, 4.0, 0.5, 10.0];
    let mut theta = Matrix::from_vec(1, 4, vec![-2.0, 2.0, 0.0, 1.0]);
    let mut state = AdamState::new(&theta);
    let config = TrainConfig {
        learning_rate: 0.05,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    for _ in 0..5000 {
        let g = Matrix::from_fn(1, 4, |_, i| curvature[i] * (theta.get(0, i) - target[i]));
        adamw_step(&mut theta, &g, &mut state, &config);
    }
    for (i, t) in target.iter().enumerate() {
        assert!((theta.get(0, i) - t).abs() < 1e-6, "{i}: {}", theta.get(0, i));
    }
}

#[test]
fn overfitting_one_image_drives_the_loss_down() {
    let model = Model::<f64>::new(toy_spec(), 81).unwrap();
    let data = dataset(&model, 1);
    let config = TrainConfig {
        learning_rate: 5e-3,
        epochs: 300,
        batch_size: 1,
        weight_decay: 0.0,
        seed: 81,
        ..TrainConfig::default()
    };
    let state = train(TrainState::new(model, config), &data, |_| Ok(())).unwrap();
    let first = state.log.first().unwrap().loss;
    let last = state.log.last().unwrap().loss;
    assert!(last < 0.05 * first, "{first} -> {last}");
}

fn short_run(seed: u64, epochs: usize) -> TrainState<f64> {
    let model = Model::<f64>::new(toy_spec(), seed).unwrap();
    let data = dataset(&model, 5);
    let config = TrainConfig {
        epochs,
        batch_size: 2,
        seed,
        ..TrainConfig::default()
    };
    train(TrainState::new(model, config), &data, |_| Ok(())).unwrap()
}

#[test]
fn training_is_reproducible() {
    let a = short_run(7, 2);
    let b = short_run(7, 2);
    assert_eq!(a.log, b.log);
    assert_eq!(
        encode_checkpoint(&to_checkpoint(&a)),
        encode_checkpoint(&to_checkpoint(&b))
    );

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| short_run(7, 2));
    assert_eq!(single.log, a.log);
    assert_eq!(single.model, a.model);
}

#[test]
fn tokenizer_projections_stay_frozen() {
    let model = Model::<f64>::new(toy_spec(), 82).unwrap();
    let before = to_checkpoint(&TrainState::new(model, TrainConfig::default()));
    let after = to_checkpoint(&short_run(82, 1));
    let mut compared = 0;
    for t in before.tensors.iter().filter(|t| t.name.starts_with("tokenizer.")) {
        let other = after.get(&t.name).unwrap();
        assert_eq!(
            t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            other.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        compared += 1;
    }
    assert_eq!(compared, 2);
    let trained = |name: &str| before.get(name).unwrap().data != after.get(name).unwrap().data;
    assert!(trained("adapter.0.weight"));
    assert!(trained("predictor.1.head.weight"));
}

#[test]
fn resumed_training_continues_the_epoch_count() {
    let first = short_run(83, 2);
    let ckpt = to_checkpoint(&first);
    let config = TrainConfig {
        epochs: 3,
        ..first.config.clone()
    };
    let resumed: TrainState<f64> = resume_from_checkpoint(&ckpt, Some(config)).unwrap();
    assert_eq!(resumed.epochs_done, 2);
    assert_eq!(resumed.adam.step, first.adam.step);
    let model = resumed.model.clone();
    let data = dataset(&model, 5);
    let mut seen = Vec::new();
    let done = train(resumed, &data, |s| {
        seen.push(s.epochs_done);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![3]);
    assert!(done.log.iter().all(|r| r.epoch == 3));
    assert_eq!(done.log.first().unwrap().step, first.steps_done + 1);
}

#[test]
fn epoch_callback_sees_every_epoch() {
    let model = Model::<f64>::new(toy_spec(), 84).unwrap();
    let data = dataset(&model, 3);
    let config = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let mut epochs = Vec::new();
    let state = train(TrainState::new(model, config), &data, |s| {
        epochs.push((s.epochs_done, s.log.len()));
        Ok(())
    })
    .unwrap();
    // 3 images in batches of 2: two steps per epoch
    assert_eq!(epochs, vec![(1, 2), (2, 4), (3, 6)]);
    assert_eq!(state.epoch_losses().len(), 3);
}

#[test]
fn empty_training_set_is_an_error() {
    let model = Model::<f64>::new(toy_spec(), 85).unwrap();
    let result = train(TrainState::new(model, TrainConfig::default()), &[], |_| Ok(()));
    assert!(matches!(result, Err(Error::InvalidArgument(_))));
}
