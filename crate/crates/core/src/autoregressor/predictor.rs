//! Offset token predictor.
//!
//! A sequence `v_1..v_L` with offset `M` is fed as `[bos_1..bos_M, v_1..v_L]`
//! and supervised against `[v_1..v_L, eos_1..eos_M]`. Output row `p` sees
//! input rows `0..=p` only, which hold `v_1..v_{p+1-M}`, so the prediction
//! of `v_l` (row `l-1`) never depends on the `M` tokens nearest to it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{
    block_backward, block_forward, block_infer, rms_norm, rms_norm_backward, BlockCache, BlockConfig, MambaBlockParams,
    RmsOut,
};
use crate::error::{Error, Result};
use crate::params::{prefixed, Parameters};
use crate::sequencer::TokenSequence;
use crate::tensor::{Linear, Matrix, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub block: BlockConfig,
    pub n_layers: usize,
    /// Rows available in the BOS/EOS tables; the largest `M` accepted.
    pub max_offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams<T> {
    pub blocks: Vec<MambaBlockParams<T>>,
    /// Final RMS-norm scale `[1 × C]`.
    pub norm_f: Matrix<T>,
    pub head: Linear<T>,
    /// `[M_max × C]`
    pub bos: Matrix<T>,
    /// `[M_max × C]`
    pub eos: Matrix<T>,
}

impl<T: Real> Parameters<T> for PredictorParams<T> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(prefixed(&format!("blocks.{i}"), b.tensors()));
        }
        out.push(("norm_f".into(), &self.norm_f));
        out.extend(prefixed("head", self.head.tensors()));
        out.push(("bos".into(), &self.bos));
        out.push(("eos".into(), &self.eos));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(prefixed(&format!("blocks.{i}"), b.tensors_mut()));
        }
        out.push(("norm_f".into(), &mut self.norm_f));
        out.extend(prefixed("head", self.head.tensors_mut()));
        out.push(("bos".into(), &mut self.bos));
        out.push(("eos".into(), &mut self.eos));
        out
    }
}

impl<T: Real> PredictorParams<T> {
    /// Random blocks and head; BOS/EOS start at zero.
    pub fn init<R: Rng>(cfg: PredictorConfig, rng: &mut R) -> Self {
        let c = cfg.block.d_model;
        Self {
            blocks: (0..cfg.n_layers)
                .map(|_| MambaBlockParams::init(cfg.block, rng))
                .collect(),
            norm_f: Matrix::filled(1, c, T::one()),
            head: Linear::init(c, c, rng),
            bos: Matrix::zeros(cfg.max_offset, c),
            eos: Matrix::zeros(cfg.max_offset, c),
        }
    }

    pub fn channels(&self) -> usize {
        self.norm_f.cols()
    }

    pub fn max_offset(&self) -> usize {
        self.bos.rows()
    }

    fn check(&self, tokens: &Matrix<T>, offset: usize) -> Result<()> {
        if tokens.cols() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "sequence has {} channels, predictor expects {}",
                tokens.cols(),
                self.channels()
            )));
        }
        let len = tokens.rows();
        if offset == 0 {
            return Err(Error::InvalidArgument("offset M must be >= 1".into()));
        }
        if offset > len {
            return Err(Error::OffsetOutOfRange { offset, len });
        }
        if offset > self.max_offset() {
            return Err(Error::InvalidArgument(format!(
                "offset M = {offset} exceeds the {} BOS/EOS rows of this predictor",
                self.max_offset()
            )));
        }
        Ok(())
    }

    fn padded_input(&self, tokens: &Matrix<T>, offset: usize) -> Matrix<T> {
        Matrix::vstack(&self.bos.slice_rows(0, offset), tokens)
    }

    /// `[v_1..v_L, eos_1..eos_M]`, the training targets of the `L + M` outputs.
    pub fn targets(&self, tokens: &Matrix<T>, offset: usize) -> Matrix<T> {
        Matrix::vstack(tokens, &self.eos.slice_rows(0, offset))
    }
}

/// Activations retained for [`predictor_backward`].
#[derive(Clone, Debug)]
pub struct PredictorCache<T> {
    offset: usize,
    blocks: Vec<BlockCache<T>>,
    residual: Matrix<T>,
    inv_rms: Vec<T>,
    normed: Matrix<T>,
}

/// All `L + M` outputs for raw tokens `[L × C]` with offset `M`.
pub fn predictor_forward<T: Real>(
    params: &PredictorParams<T>,
    tokens: &Matrix<T>,
    offset: usize,
) -> Result<(Matrix<T>, PredictorCache<T>)> {
    params.check(tokens, offset)?;
    let mut h = params.padded_input(tokens, offset);
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (out, cache) = block_forward(block, &h)?;
        caches.push(cache);
        h = out;
    }
    let RmsOut { out: normed, inv_rms } = rms_norm(&h, &params.norm_f);
    let out = params.head.forward(&normed);
    Ok((
        out,
        PredictorCache {
            offset,
            blocks: caches,
            residual: h,
            inv_rms,
            normed,
        },
    ))
}

/// All `L + M` outputs without keeping activations.
pub fn predictor_infer<T: Real>(params: &PredictorParams<T>, tokens: &Matrix<T>, offset: usize) -> Result<Matrix<T>> {
    params.check(tokens, offset)?;
    let mut h = params.padded_input(tokens, offset);
    for block in &params.blocks {
        h = block_infer(block, &h)?;
    }
    let normed = rms_norm(&h, &params.norm_f).out;
    Ok(params.head.forward(&normed))
}

/// Predicted tokens `v̄_1..v̄_L` for one directional sequence.
pub fn predict_sequence<T: Real>(params: &PredictorParams<T>, seq: &TokenSequence<T>) -> Result<Matrix<T>> {
    let out = predictor_infer(params, &seq.tokens, seq.offset_m)?;
    Ok(out.slice_rows(0, seq.len()))
}

/// Backpropagates `d_out` (`[(L+M) × C]`). Parameter gradients, including the
/// BOS rows, are accumulated into `grads`; returns `dL/dtokens` (`[L × C]`).
/// EOS only appears in the targets, so its gradient is the caller's.
pub fn predictor_backward<T: Real>(
    params: &PredictorParams<T>,
    cache: &PredictorCache<T>,
    d_out: &Matrix<T>,
    grads: &mut PredictorParams<T>,
) -> Result<Matrix<T>> {
    if d_out.shape() != cache.residual.shape() {
        return Err(Error::ShapeMismatch("predictor gradient does not match forward".into()));
    }
    let d_normed = params.head.backward(&cache.normed, d_out, &mut grads.head);
    let mut dh = rms_norm_backward(
        &cache.residual,
        &params.norm_f,
        &cache.inv_rms,
        &d_normed,
        &mut grads.norm_f,
    );
    for ((block, block_cache), block_grads) in params
        .blocks
        .iter()
        .zip(&cache.blocks)
        .zip(grads.blocks.iter_mut())
        .rev()
    {
        dh = block_backward(block, block_cache, &dh, block_grads)?;
    }
    let m = cache.offset;
    for r in 0..m {
        for (g, &d) in grads.bos.row_mut(r).iter_mut().zip(dh.row(r)) {
            *g += d;
        }
    }
    Ok(dh.slice_rows(m, dh.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::sequencer::ScanDirection;

    fn toy() -> PredictorParams<f64> {
        let cfg = PredictorConfig {
            block: BlockConfig {
                d_model: 3,
                expand: 2,
                d_conv: 2,
                state_size: 2,
            },
            n_layers: 2,
            max_offset: 4,
        };
        let mut p = PredictorParams::init(cfg, &mut stream(11, Stream::Aux, 0));
        let mut rng = stream(12, Stream::Aux, 0);
        p.bos = Matrix::uniform(4, 3, 1.0, &mut rng);
        p.eos = Matrix::uniform(4, 3, 1.0, &mut rng);
        p
    }

    #[test]
    fn third_prediction_only_sees_first_token() {
        let p = toy();
        let mut rng = stream(13, Stream::Aux, 0);
        let v = Matrix::uniform(4, 3, 1.0, &mut rng);
        let seq = TokenSequence {
            tokens: v.clone(),
            direction: ScanDirection::RowForward,
            hierarchy: 0,
            offset_m: 2,
        };
        let base = predict_sequence(&p, &seq).unwrap();
        assert_eq!(base.shape(), (4, 3));
        for j in 1..4 {
            let mut s = seq.clone();
            s.tokens.set(j, 0, s.tokens.get(j, 0) - 0.81);
            let out = predict_sequence(&p, &s).unwrap();
            assert_eq!(out.row(2), base.row(2));
        }
        let mut s = seq.clone();
        s.tokens.set(0, 2, 3.0);
        assert_ne!(predict_sequence(&p, &s).unwrap().row(2), base.row(2));
    }

    #[test]
    fn targets_append_eos_rows() {
        let p = toy();
        let v = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64);
        let t = p.targets(&v, 2);
        assert_eq!(t.rows(), 6);
        assert_eq!(t.slice_rows(0, 4), v);
        assert_eq!(t.row(4), p.eos.row(0));
        assert_eq!(t.row(5), p.eos.row(1));
    }

    #[test]
    fn offset_bounds() {
        let p = toy();
        let v = Matrix::zeros(3, 3);
        assert!(predictor_infer(&p, &v, 0).is_err());
        assert!(matches!(
            predictor_infer(&p, &v, 4),
            Err(Error::OffsetOutOfRange { offset: 4, len: 3 })
        ));
        assert!(predictor_infer(&p, &v, 3).is_ok());
        assert!(predictor_infer(&p, &Matrix::zeros(10, 3), 5).is_err());
    }
}
