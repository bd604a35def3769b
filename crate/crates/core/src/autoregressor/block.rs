//! Mamba-style residual block: RMS pre-norm, gated input projection,
//! depthwise causal convolution, selective scan, output projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::impl_parameters;
use crate::ssm::{self, ScanActivations, SsmLayerParams};
use crate::tensor::{silu, silu_grad, Linear, Matrix, Real};

pub(crate) const RMS_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d_model: usize,
    pub expand: usize,
    pub d_conv: usize,
    pub state_size: usize,
}

impl BlockConfig {
    pub fn inner(&self) -> usize {
        self.expand * self.d_model
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MambaBlockParams<T> {
    /// RMS-norm scale `[1 × C]`.
    pub norm: Matrix<T>,
    /// `C → 2·E·C`; the first half is the content branch, the second the gate.
    pub in_proj: Linear<T>,
    /// Depthwise causal kernel `[E·C × d_conv]`; tap `d_conv - 1` sees the
    /// current position.
    pub conv_weight: Matrix<T>,
    pub conv_bias: Matrix<T>,
    pub ssm: SsmLayerParams<T>,
    /// `E·C → C`
    pub out_proj: Linear<T>,
}

impl_parameters!(MambaBlockParams {
    leaves: [norm, conv_weight, conv_bias],
    nodes: [in_proj, ssm, out_proj]
});

impl<T: Real> MambaBlockParams<T> {
    pub fn init<R: Rng>(cfg: BlockConfig, rng: &mut R) -> Self {
        let inner = cfg.inner();
        Self {
            norm: Matrix::filled(1, cfg.d_model, T::one()),
            in_proj: Linear::init(cfg.d_model, 2 * inner, rng),
            conv_weight: Matrix::uniform(inner, cfg.d_conv, 1.0 / (cfg.d_conv as f64).sqrt(), rng),
            conv_bias: Matrix::zeros(1, inner),
            ssm: SsmLayerParams::init(inner, cfg.state_size, rng),
            out_proj: Linear::init(inner, cfg.d_model, rng),
        }
    }

    pub fn config(&self) -> BlockConfig {
        let d_model = self.norm.cols();
        BlockConfig {
            d_model,
            expand: self.conv_weight.rows() / d_model.max(1),
            d_conv: self.conv_weight.cols(),
            state_size: self.ssm.state_size(),
        }
    }

    fn inner(&self) -> usize {
        self.conv_weight.rows()
    }
}

pub(crate) struct RmsOut<T> {
    pub out: Matrix<T>,
    pub inv_rms: Vec<T>,
}

pub(crate) fn rms_norm<T: Real>(u: &Matrix<T>, scale: &Matrix<T>) -> RmsOut<T> {
    let n = T::lit(u.cols() as f64);
    let w = scale.as_slice();
    let mut out = Matrix::zeros(u.rows(), u.cols());
    let mut inv_rms = Vec::with_capacity(u.rows());
    for t in 0..u.rows() {
        let row = u.row(t);
        let ms = row.iter().map(|&v| v * v).sum::<T>() / n;
        let inv = T::one() / (ms + T::lit(RMS_EPS)).sqrt();
        for (o, (&x, &s)) in out.row_mut(t).iter_mut().zip(row.iter().zip(w)) {
            *o = x * inv * s;
        }
        inv_rms.push(inv);
    }
    RmsOut { out, inv_rms }
}

pub(crate) fn rms_norm_backward<T: Real>(
    u: &Matrix<T>,
    scale: &Matrix<T>,
    inv_rms: &[T],
    dv: &Matrix<T>,
    dscale: &mut Matrix<T>,
) -> Matrix<T> {
    let n = T::lit(u.cols() as f64);
    let w = scale.as_slice();
    let mut du = Matrix::zeros(u.rows(), u.cols());
    for t in 0..u.rows() {
        let (row, drow, inv) = (u.row(t), dv.row(t), inv_rms[t]);
        let mut proj = T::zero();
        for c in 0..row.len() {
            dscale.as_mut_slice()[c] += drow[c] * row[c] * inv;
            proj += drow[c] * w[c] * row[c];
        }
        let k = inv * inv * inv * proj / n;
        for (c, out) in du.row_mut(t).iter_mut().enumerate() {
            *out = inv * drow[c] * w[c] - k * row[c];
        }
    }
    du
}

fn causal_conv<T: Real>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let (len, ch, k) = (x.rows(), x.cols(), w.cols());
    let mut out = Matrix::zeros(len, ch);
    for t in 0..len {
        let row = out.row_mut(t);
        for d in 0..ch {
            let taps = w.row(d);
            let mut acc = b.as_slice()[d];
            for (tap, &wk) in taps.iter().enumerate() {
                // tap k reads position t - (K-1) + k
                if let Some(src) = (t + tap + 1).checked_sub(k) {
                    acc += wk * x.get(src, d);
                }
            }
            row[d] = acc;
        }
    }
    out
}

/// Activations retained for [`block_backward`].
#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    u: Matrix<T>,
    v: Matrix<T>,
    inv_rms: Vec<T>,
    x: Matrix<T>,
    z: Matrix<T>,
    xc: Matrix<T>,
    ssm: ScanActivations<T>,
    y: Matrix<T>,
    gate: Matrix<T>,
    g: Matrix<T>,
}

fn finite<T: Real>(m: &Matrix<T>, stage: &'static str) -> Result<()> {
    match m.first_non_finite_row() {
        Some(step) => Err(Error::NonFinite { stage, step }),
        None => Ok(()),
    }
}

fn split_branches<T: Real>(xz: &Matrix<T>, inner: usize) -> (Matrix<T>, Matrix<T>) {
    let len = xz.rows();
    let x = Matrix::from_fn(len, inner, |t, d| xz.get(t, d));
    let z = Matrix::from_fn(len, inner, |t, d| xz.get(t, inner + d));
    (x, z)
}

fn forward_impl<T: Real>(
    params: &MambaBlockParams<T>,
    u: &Matrix<T>,
    keep: bool,
) -> Result<(Matrix<T>, Option<BlockCache<T>>)> {
    if u.cols() != params.norm.cols() {
        return Err(Error::ShapeMismatch(format!(
            "block input has {} channels, block expects {}",
            u.cols(),
            params.norm.cols()
        )));
    }
    finite(u, "block input")?;
    let inner = params.inner();
    let RmsOut { out: v, inv_rms } = rms_norm(u, &params.norm);
    let xz = params.in_proj.forward(&v);
    finite(&xz, "block input projection")?;
    let (x, z) = split_branches(&xz, inner);
    let xc = causal_conv(&x, &params.conv_weight, &params.conv_bias);
    let xs = xc.map(silu);
    let (y, scan_cache) = if keep {
        let (y, c) = ssm::scan_forward(&params.ssm, &xs)?;
        (y, Some(c))
    } else {
        (ssm::scan(&params.ssm, &xs)?, None)
    };
    let gate = z.map(silu);
    let mut g = y.clone();
    for (a, &b) in g.as_mut_slice().iter_mut().zip(gate.as_slice()) {
        *a *= b;
    }
    let mut out = params.out_proj.forward(&g);
    out.add_assign(u);
    finite(&out, "block output")?;
    let cache = scan_cache.map(|ssm| BlockCache {
        u: u.clone(),
        v,
        inv_rms,
        x,
        z,
        xc,
        ssm,
        y,
        gate,
        g,
    });
    Ok((out, cache))
}

/// Shape-preserving `[L × C] → [L × C]` forward pass with cached activations.
pub fn block_forward<T: Real>(params: &MambaBlockParams<T>, u: &Matrix<T>) -> Result<(Matrix<T>, BlockCache<T>)> {
    let (out, cache) = forward_impl(params, u, true)?;
    Ok((out, cache.expect("cache requested")))
}

/// Forward pass that keeps no activations.
pub fn block_infer<T: Real>(params: &MambaBlockParams<T>, u: &Matrix<T>) -> Result<Matrix<T>> {
    forward_impl(params, u, false).map(|(out, _)| out)
}

/// Accumulates parameter gradients into `grads` and returns `dL/du`.
pub fn block_backward<T: Real>(
    params: &MambaBlockParams<T>,
    cache: &BlockCache<T>,
    dout: &Matrix<T>,
    grads: &mut MambaBlockParams<T>,
) -> Result<Matrix<T>> {
    let (len, inner) = (cache.u.rows(), params.inner());
    if dout.shape() != cache.u.shape() {
        return Err(Error::ShapeMismatch("block gradient does not match forward".into()));
    }
    let dg = params.out_proj.backward(&cache.g, dout, &mut grads.out_proj);
    let mut dy = Matrix::zeros(len, inner);
    let mut dxz = Matrix::zeros(len, 2 * inner);
    for t in 0..len {
        for d in 0..inner {
            let g = dg.get(t, d);
            dy.set(t, d, g * cache.gate.get(t, d));
            dxz.set(t, inner + d, g * cache.y.get(t, d) * silu_grad(cache.z.get(t, d)));
        }
    }
    let (dxs, ssm_grads) = ssm::scan_backward(&params.ssm, &cache.ssm, &dy)?;
    use crate::params::Parameters;
    grads.ssm.accumulate(&ssm_grads);

    let k = params.conv_weight.cols();
    for t in 0..len {
        for d in 0..inner {
            let dxc = dxs.get(t, d) * silu_grad(cache.xc.get(t, d));
            if dxc == T::zero() {
                continue;
            }
            grads.conv_bias.as_mut_slice()[d] += dxc;
            for tap in 0..k {
                if let Some(src) = (t + tap + 1).checked_sub(k) {
                    let i = d * k + tap;
                    grads.conv_weight.as_mut_slice()[i] += dxc * cache.x.get(src, d);
                    let cur = dxz.get(src, d);
                    dxz.set(src, d, cur + dxc * params.conv_weight.as_slice()[i]);
                }
            }
        }
    }
    let dv = params.in_proj.backward(&cache.v, &dxz, &mut grads.in_proj);
    let mut du = rms_norm_backward(&cache.u, &params.norm, &cache.inv_rms, &dv, &mut grads.norm);
    du.add_assign(dout);
    Ok(du)
}
