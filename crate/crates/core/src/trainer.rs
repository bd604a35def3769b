//! AdamW training over normal images.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::checkpoint::{Checkpoint, NamedTensor};
use crate::params::{zeros_like, Parameters};
use crate::pipeline::{loss_and_grad, model_from_checkpoint, model_tensors, Model, ModelSpec};
use crate::rng::{stream, Stream};
use crate::sequencer::TokenGrid;
use crate::tensor::{Matrix, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Prediction step `m`.
    pub m: usize,
    /// Rescale the batch gradient to this global norm when it is larger.
    pub clip_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 10,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            eps: 1e-8,
            batch_size: 2,
            seed: 0,
            m: 4,
            clip_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.m == 0 {
            return bad("m must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be > 0 and weight_decay >= 0");
        }
        if matches!(self.clip_grad_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_grad_norm must be > 0");
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    /// Number of applied updates.
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<P: Parameters<T>>(params: &P) -> Self {
        let zeros: Vec<Matrix<T>> = params.tensors().into_iter().map(|(_, m)| m.zeros_like()).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// The gradient of the named tensor held a NaN or infinity.
    Skipped {
        parameter: String,
    },
}

/// One decoupled-weight-decay Adam update.
pub fn adamw_step<T: Real, P: Parameters<T>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<T>,
    config: &TrainConfig,
) -> StepOutcome {
    if let Some(parameter) = grads.first_non_finite() {
        log::warn!("skipping update: non-finite gradient in {parameter}");
        return StepOutcome::Skipped { parameter };
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = config.betas;
    let c1 = T::lit(1.0 - b1.powf(t));
    let c2 = T::lit(1.0 - b2.powf(t));
    let (b1, b2) = (T::lit(b1), T::lit(b2));
    let (lr, wd, eps) = (
        T::lit(config.learning_rate),
        T::lit(config.weight_decay),
        T::lit(config.eps),
    );
    let one = T::one();
    let grads = grads.tensors();
    for (i, (_, theta)) in params.tensors_mut().into_iter().enumerate() {
        let g = grads[i].1.as_slice();
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        for (j, p) in theta.as_mut_slice().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
        }
    }
    StepOutcome::Applied
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// 1-based epoch.
    pub epoch: usize,
    /// 1-based step, counted across epochs.
    pub step: usize,
    pub loss: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,step,loss";

impl LossRecord {
    /// The loss is written in shortest round-trip form.
    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.epoch, self.step, self.loss)
    }
}

/// Model, optimizer and progress; everything needed to continue training.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub config: TrainConfig,
    pub epochs_done: usize,
    pub steps_done: usize,
    pub log: Vec<LossRecord>,
}

impl<T: Real> TrainState<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Self {
        Self {
            adam: AdamState::new(&model.params),
            model,
            config,
            epochs_done: 0,
            steps_done: 0,
            log: Vec::new(),
        }
    }

    /// Mean step loss of each completed epoch recorded in this session.
    pub fn epoch_losses(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.log {
            match out.last_mut() {
                Some(last) if last.0 == r.epoch => {
                    last.1 += r.loss;
                    last.2 += 1;
                }
                _ => out.push((r.epoch, r.loss, 1)),
            }
        }
        out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
    }
}

/// Mean loss and gradient over a batch. Items are processed in parallel and
/// reduced in batch order, so the result does not depend on the thread count.
pub fn batch_loss_and_grad<T: Real>(
    model: &Model<T>,
    batch: &[&[TokenGrid<T>]],
) -> Result<(T, crate::pipeline::ModelParams<T>)> {
    let results: Vec<(T, crate::pipeline::ModelParams<T>)> = batch
        .par_iter()
        .map(|grids| loss_and_grad(model, grids))
        .collect::<Result<_>>()?;
    let mut grads = zeros_like(&model.params);
    let mut loss = T::zero();
    for (l, g) in &results {
        loss += *l;
        grads.accumulate(g);
    }
    let inv = T::one() / T::lit(batch.len() as f64);
    grads.scale_all(inv);
    Ok((loss * inv, grads))
}

/// Runs epochs `epochs_done + 1 ..= config.epochs`. `on_epoch` sees the state
/// after every epoch (for checkpointing and logging) and may abort training.
pub fn train<T: Real>(
    mut state: TrainState<T>,
    data: &[Vec<TokenGrid<T>>],
    mut on_epoch: impl FnMut(&TrainState<T>) -> Result<()>,
) -> Result<TrainState<T>> {
    state.config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let config = state.config.clone();
    while state.epochs_done < config.epochs {
        let epoch = state.epochs_done + 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream(config.seed, Stream::DataOrder, epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[TokenGrid<T>]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
            let (loss, mut grads) = batch_loss_and_grad(&state.model, &batch)?;
            state.steps_done += 1;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: "training loss",
                    step: state.steps_done,
                });
            }
            if let Some(max_norm) = config.clip_grad_norm {
                let norm = grads.sum_of_squares().sqrt();
                if norm.is_finite() && norm > T::lit(max_norm) {
                    grads.scale_all(T::lit(max_norm) / norm);
                }
            }
            adamw_step(&mut state.model.params, &grads, &mut state.adam, &config);
            state.log.push(LossRecord {
                epoch,
                step: state.steps_done,
                loss: loss.as_f64(),
            });
        }
        state.epochs_done = epoch;
        on_epoch(&state)?;
    }
    Ok(state)
}

const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

/// Checkpoint with the model, frozen tokenizer, optimizer moments and progress.
pub fn to_checkpoint<T: Real>(state: &TrainState<T>) -> Checkpoint {
    let mut tensors = model_tensors(&state.model);
    for (prefix, moments) in [(ADAM_M, &state.adam.m), (ADAM_V, &state.adam.v)] {
        for ((name, _), m) in state.model.params.tensors().into_iter().zip(moments) {
            tensors.push(NamedTensor {
                name: format!("{prefix}{name}"),
                shape: vec![m.rows(), m.cols()],
                data: m.as_slice().iter().map(|v| v.as_f32()).collect(),
            });
        }
    }
    Checkpoint {
        meta: json!({
            "spec": state.model.spec,
            "train": state.config,
            "epoch": state.epochs_done,
            "step": state.steps_done,
            "adam_step": state.adam.step,
        }),
        tensors,
    }
}

fn meta_field<'a>(ckpt: &'a Checkpoint, key: &str) -> Result<&'a serde_json::Value> {
    ckpt.meta
        .get(key)
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint metadata lacks '{key}'")))
}

fn meta_u64(ckpt: &Checkpoint, key: &str) -> Result<u64> {
    meta_field(ckpt, key)?
        .as_u64()
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint metadata '{key}' is not an integer")))
}

/// The model spec echoed in a checkpoint.
pub fn checkpoint_spec(ckpt: &Checkpoint) -> Result<ModelSpec> {
    serde_json::from_value(meta_field(ckpt, "spec")?.clone())
        .map_err(|e| Error::InvalidArgument(format!("checkpoint spec: {e}")))
}

/// Model only, for scoring.
pub fn model_from_ckpt<T: Real>(ckpt: &Checkpoint) -> Result<Model<T>> {
    model_from_checkpoint(checkpoint_spec(ckpt)?, ckpt)
}

/// Full training state; `config` replaces the stored one (e.g. more epochs).
pub fn resume_from_checkpoint<T: Real>(ckpt: &Checkpoint, config: Option<TrainConfig>) -> Result<TrainState<T>> {
    let model = model_from_ckpt::<T>(ckpt)?;
    let config = match config {
        Some(c) => c,
        None => serde_json::from_value(meta_field(ckpt, "train")?.clone())
            .map_err(|e| Error::InvalidArgument(format!("checkpoint train config: {e}")))?,
    };
    let mut adam = AdamState::new(&model.params);
    adam.step = meta_u64(ckpt, "adam_step")?;
    for (prefix, moments) in [(ADAM_M, &mut adam.m), (ADAM_V, &mut adam.v)] {
        for ((name, _), m) in model.params.tensors().into_iter().zip(moments.iter_mut()) {
            let full = format!("{prefix}{name}");
            let t = ckpt
                .get(&full)
                .ok_or_else(|| Error::ShapeMismatch(format!("checkpoint lacks tensor {full}")))?;
            if t.shape != [m.rows(), m.cols()] {
                return Err(Error::ShapeMismatch(format!("tensor {full} has the wrong shape")));
            }
            for (dst, &src) in m.as_mut_slice().iter_mut().zip(&t.data) {
                *dst = T::of_f32(src);
            }
        }
    }
    Ok(TrainState {
        model,
        adam,
        config,
        epochs_done: meta_u64(ckpt, "epoch")? as usize,
        steps_done: meta_u64(ckpt, "step")? as usize,
        log: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix<f64> {
        Matrix::filled(1, 1, v)
    }

    fn cfg(lr: f64, wd: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &before.zeros_like(), &mut st, &cfg(1e-3, 0.0));
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &scalar(1.0), &mut st, &cfg(1e-3, 0.0));
        // m̂ = 1, v̂ = 1 after bias correction
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn decay_shrinks_parameters() {
        let mut p = scalar(2.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &scalar(0.0), &mut st, &cfg(0.1, 0.5));
        assert!((p.get(0, 0) - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_skips_the_update() {
        let mut p = scalar(2.0);
        let mut st = AdamState::new(&p);
        let out = adamw_step(&mut p, &scalar(f64::NAN), &mut st, &cfg(0.1, 0.0));
        assert_eq!(
            out,
            StepOutcome::Skipped {
                parameter: "value".into()
            }
        );
        assert_eq!(p.get(0, 0), 2.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(cfg(0.0, 0.0).validate().is_err());
        let c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            m: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
