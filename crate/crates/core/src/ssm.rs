//! Diagonal selective state-space layer.
//!
//! Per channel `d` and state index `p` the layer runs
//!
//! ```text
//! Δ_t    = softplus(W_Δ x_t + b_Δ)[d]
//! ā      = exp(Δ_t a[d,p]),   a = -exp(a_log)
//! b̄      = (exp(Δ_t a) - 1) / a · B_t[p]
//! h_t    = ā h_{t-1} + b̄ x_t[d]
//! y_t[d] = Σ_p C_t[p] h_t[d,p] + D[d] x_t[d]
//! ```
//!
//! with `B_t = W_B x_t + b_B` and `C_t = W_C x_t + b_C`. The scan is strictly
//! sequential in `t` and costs `O(L·D·P)`; the backward pass is the matching
//! reverse-time adjoint scan with the same cost.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::impl_parameters;
use crate::tensor::{dot, sigmoid, softplus, Matrix, Real};

/// Below this `|Δa|` the ZOH input coefficient switches to its series form.
const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SsmLayerParams<T> {
    /// `[D × P]`, continuous-time state matrix is `A = -exp(a_log)`.
    pub a_log: Matrix<T>,
    /// `[D × D]`
    pub w_delta: Matrix<T>,
    /// `[1 × D]`
    pub b_delta: Matrix<T>,
    /// `[P × D]`
    pub w_b: Matrix<T>,
    /// `[1 × P]`
    pub b_b: Matrix<T>,
    /// `[P × D]`
    pub w_c: Matrix<T>,
    /// `[1 × P]`
    pub b_c: Matrix<T>,
    /// `[1 × D]`
    pub d_skip: Matrix<T>,
}

impl_parameters!(SsmLayerParams {
    leaves: [a_log, w_delta, b_delta, w_b, b_b, w_c, b_c, d_skip],
    nodes: []
});

impl<T: Real> SsmLayerParams<T> {
    pub fn zeros(d_in: usize, state: usize) -> Self {
        Self {
            a_log: Matrix::zeros(d_in, state),
            w_delta: Matrix::zeros(d_in, d_in),
            b_delta: Matrix::zeros(1, d_in),
            w_b: Matrix::zeros(state, d_in),
            b_b: Matrix::zeros(1, state),
            w_c: Matrix::zeros(state, d_in),
            b_c: Matrix::zeros(1, state),
            d_skip: Matrix::zeros(1, d_in),
        }
    }

    /// S4D-real style initialization: `a_log[d,p] = ln(p+1)`, step sizes
    /// log-uniform in `[0.01, 0.1]`, unit feedthrough.
    pub fn init<R: Rng>(d_in: usize, state: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, state);
        p.a_log = Matrix::from_fn(d_in, state, |_, s| T::lit(((s + 1) as f64).ln()));
        let bound = 1.0 / (d_in as f64).sqrt();
        p.w_delta = Matrix::uniform(d_in, d_in, 0.1 * bound, rng);
        p.b_delta = Matrix::from_fn(1, d_in, |_, _| {
            let dt = rng.random_range(0.01f64.ln()..0.1f64.ln()).exp();
            T::lit(inverse_softplus(dt))
        });
        p.w_b = Matrix::uniform(state, d_in, bound, rng);
        p.w_c = Matrix::uniform(state, d_in, bound, rng);
        p.d_skip = Matrix::filled(1, d_in, T::one());
        p
    }

    #[inline]
    pub fn d_in(&self) -> usize {
        self.a_log.rows()
    }

    #[inline]
    pub fn state_size(&self) -> usize {
        self.a_log.cols()
    }

    /// Materialized `A = -exp(a_log)`.
    #[inline]
    pub fn a(&self, d: usize, p: usize) -> T {
        -self.a_log.get(d, p).exp()
    }

    /// Selectivity switched off: `Δ`, `B`, `C` no longer depend on the input.
    pub fn freeze_selectivity(&mut self) {
        self.w_delta.fill_zero();
        self.w_b.fill_zero();
        self.w_c.fill_zero();
    }

    pub fn cast<U: Real>(&self) -> SsmLayerParams<U> {
        SsmLayerParams {
            a_log: self.a_log.cast(),
            w_delta: self.w_delta.cast(),
            b_delta: self.b_delta.cast(),
            w_b: self.w_b.cast(),
            b_b: self.b_b.cast(),
            w_c: self.w_c.cast(),
            b_c: self.b_c.cast(),
            d_skip: self.d_skip.cast(),
        }
    }
}

fn inverse_softplus(y: f64) -> f64 {
    // softplus(x) = y  <=>  x = y + ln(1 - exp(-y))
    y + (-(-y).exp()).ln_1p()
}

/// ZOH discretization of one diagonal entry: returns `(ā, b̄)`.
///
/// `a = 0` takes the analytic limit `b̄ = Δ·b`.
pub fn discretize<T: Real>(a: T, b: T, delta: T) -> Result<(T, T)> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "discretization step must be positive, got {delta:?}"
        )));
    }
    let (a_bar, g) = zoh(a, delta);
    Ok((a_bar, g * b))
}

/// `(exp(Δa), (exp(Δa) - 1)/a)`. The second factor multiplies `B`.
#[inline]
pub(crate) fn zoh<T: Real>(a: T, delta: T) -> (T, T) {
    let z = delta * a;
    let a_bar = z.exp();
    let g = if z.abs() < T::lit(SERIES_THRESHOLD) {
        delta * (T::one() + z * T::lit(0.5))
    } else {
        z.exp_m1() / a
    };
    (a_bar, g)
}

/// Partial derivatives of the input factor `g(a, Δ) = (exp(Δa) - 1)/a`:
/// returns `(∂g/∂Δ, ∂g/∂a)`.
#[inline]
fn zoh_input_grads<T: Real>(a: T, delta: T, a_bar: T) -> (T, T) {
    let z = delta * a;
    let d2 = delta * delta;
    if z.abs() < T::lit(SERIES_THRESHOLD) {
        return (T::one() + z, d2 * T::lit(0.5));
    }
    let dg_da = if z.abs() < T::lit(1e-4) {
        d2 * (T::lit(0.5) + z / T::lit(3.0) + z * z / T::lit(8.0))
    } else {
        d2 * (z * a_bar - z.exp_m1()) / (z * z)
    };
    (a_bar, dg_da)
}

/// Everything the adjoint scan needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ScanActivations<T> {
    x: Matrix<T>,
    /// Pre-softplus step-size logits `[L × D]`.
    s: Matrix<T>,
    delta: Matrix<T>,
    b: Matrix<T>,
    c: Matrix<T>,
    /// Post-update hidden states, `L` blocks of `D·P`.
    h: Vec<T>,
    state: usize,
}

impl<T: Real> ScanActivations<T> {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hidden state after step `t`, laid out `[D × P]`.
    pub fn state_at(&self, t: usize) -> &[T] {
        let n = self.x.cols() * self.state;
        &self.h[t * n..(t + 1) * n]
    }

    pub fn delta(&self) -> &Matrix<T> {
        &self.delta
    }

    pub fn input_b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn output_c(&self) -> &Matrix<T> {
        &self.c
    }
}

/// Hidden state of a running scan.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmState<T> {
    /// `[D × P]`
    pub h: Matrix<T>,
    /// Number of steps consumed.
    pub step: usize,
}

impl<T: Real> SsmState<T> {
    pub fn new(d_in: usize, state: usize) -> Self {
        Self {
            h: Matrix::zeros(d_in, state),
            step: 0,
        }
    }
}

fn check_input<T: Real>(params: &SsmLayerParams<T>, x: &Matrix<T>) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("scan over an empty sequence".into()));
    }
    if x.cols() != params.d_in() {
        return Err(Error::ShapeMismatch(format!(
            "scan input has {} channels, layer expects {}",
            x.cols(),
            params.d_in()
        )));
    }
    if let Some(step) = x.first_non_finite_row() {
        return Err(Error::NonFinite {
            stage: "ssm input",
            step,
        });
    }
    Ok(())
}

fn affine_rows<T: Real>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    let bias = b.as_slice();
    for t in 0..x.rows() {
        let xt = x.row(t);
        for (o, v) in out.row_mut(t).iter_mut().enumerate() {
            *v = bias[o] + dot(w.row(o), xt);
        }
    }
    out
}

struct Projections<T> {
    s: Matrix<T>,
    delta: Matrix<T>,
    b: Matrix<T>,
    c: Matrix<T>,
}

fn project<T: Real>(params: &SsmLayerParams<T>, x: &Matrix<T>) -> Projections<T> {
    let s = affine_rows(x, &params.w_delta, &params.b_delta);
    let delta = s.map(softplus);
    Projections {
        b: affine_rows(x, &params.w_b, &params.b_b),
        c: affine_rows(x, &params.w_c, &params.b_c),
        s,
        delta,
    }
}

/// Advances `h` by one step and returns `y_t`.
#[inline]
fn step<T: Real>(
    params: &SsmLayerParams<T>,
    a: &[T],
    h: &mut [T],
    xt: &[T],
    delta: &[T],
    bt: &[T],
    ct: &[T],
    yt: &mut [T],
) {
    let p_dim = bt.len();
    let skip = params.d_skip.as_slice();
    for d in 0..xt.len() {
        let hd = &mut h[d * p_dim..(d + 1) * p_dim];
        let ad = &a[d * p_dim..(d + 1) * p_dim];
        let mut acc = T::zero();
        for p in 0..p_dim {
            let (a_bar, g) = zoh(ad[p], delta[d]);
            hd[p] = a_bar * hd[p] + g * bt[p] * xt[d];
            acc += ct[p] * hd[p];
        }
        yt[d] = acc + skip[d] * xt[d];
    }
}

fn materialize_a<T: Real>(params: &SsmLayerParams<T>) -> Vec<T> {
    params.a_log.as_slice().iter().map(|&v| -v.exp()).collect()
}

/// Forward scan from `h_0 = 0`, caching activations for [`scan_backward`].
pub fn scan_forward<T: Real>(params: &SsmLayerParams<T>, x: &Matrix<T>) -> Result<(Matrix<T>, ScanActivations<T>)> {
    check_input(params, x)?;
    let (len, d_in, p_dim) = (x.rows(), params.d_in(), params.state_size());
    let proj = project(params, x);
    let a = materialize_a(params);
    let mut y = Matrix::zeros(len, d_in);
    let mut hs = Vec::with_capacity(len * d_in * p_dim);
    let mut h = vec![T::zero(); d_in * p_dim];
    for t in 0..len {
        step(
            params,
            &a,
            &mut h,
            x.row(t),
            proj.delta.row(t),
            proj.b.row(t),
            proj.c.row(t),
            y.row_mut(t),
        );
        if !y.row(t).iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "ssm scan",
                step: t,
            });
        }
        hs.extend_from_slice(&h);
    }
    let cache = ScanActivations {
        x: x.clone(),
        s: proj.s,
        delta: proj.delta,
        b: proj.b,
        c: proj.c,
        h: hs,
        state: p_dim,
    };
    Ok((y, cache))
}

/// Forward scan without an activation cache; memory is `O(D·P)` beyond the
/// output. Continues from (and updates) `state`.
pub fn scan_with_state<T: Real>(
    params: &SsmLayerParams<T>,
    x: &Matrix<T>,
    state: &mut SsmState<T>,
) -> Result<Matrix<T>> {
    check_input(params, x)?;
    if state.h.shape() != (params.d_in(), params.state_size()) {
        return Err(Error::ShapeMismatch("ssm state does not match layer".into()));
    }
    let proj = project(params, x);
    let a = materialize_a(params);
    let mut y = Matrix::zeros(x.rows(), params.d_in());
    for t in 0..x.rows() {
        step(
            params,
            &a,
            state.h.as_mut_slice(),
            x.row(t),
            proj.delta.row(t),
            proj.b.row(t),
            proj.c.row(t),
            y.row_mut(t),
        );
        if !y.row(t).iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "ssm scan",
                step: state.step + t,
            });
        }
    }
    state.step += x.rows();
    Ok(y)
}

/// Forward scan from zero state without caching.
pub fn scan<T: Real>(params: &SsmLayerParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    let mut state = SsmState::new(params.d_in(), params.state_size());
    scan_with_state(params, x, &mut state)
}

/// Reference implementation: the recurrence written out literally, one
/// scalar at a time, recomputing every selective projection in place.
pub fn naive_unroll<T: Real>(params: &SsmLayerParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    check_input(params, x)?;
    let (len, d_in, p_dim) = (x.rows(), params.d_in(), params.state_size());
    let mut h = vec![vec![T::zero(); p_dim]; d_in];
    let mut y = Matrix::zeros(len, d_in);
    for t in 0..len {
        for d in 0..d_in {
            let mut s = params.b_delta.get(0, d);
            for j in 0..d_in {
                s += params.w_delta.get(d, j) * x.get(t, j);
            }
            let delta = softplus(s);
            let mut out = T::zero();
            for p in 0..p_dim {
                let mut b = params.b_b.get(0, p);
                let mut c = params.b_c.get(0, p);
                for j in 0..d_in {
                    b += params.w_b.get(p, j) * x.get(t, j);
                    c += params.w_c.get(p, j) * x.get(t, j);
                }
                let (a_bar, b_bar) = discretize(params.a(d, p), b, delta)?;
                h[d][p] = a_bar * h[d][p] + b_bar * x.get(t, d);
                out += c * h[d][p];
            }
            y.set(t, d, out + params.d_skip.get(0, d) * x.get(t, d));
        }
        if let Some(step) = y.slice_rows(t, t + 1).first_non_finite_row() {
            return Err(Error::NonFinite {
                stage: "ssm scan",
                step: t + step,
            });
        }
    }
    Ok(y)
}

/// Reverse-time adjoint scan. Returns `dL/dx` and the parameter gradients.
pub fn scan_backward<T: Real>(
    params: &SsmLayerParams<T>,
    cache: &ScanActivations<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, SsmLayerParams<T>)> {
    let (len, d_in, p_dim) = (cache.len(), params.d_in(), params.state_size());
    if dy.shape() != (len, d_in) {
        return Err(Error::ShapeMismatch(format!(
            "scan gradient is {:?}, cached forward was {:?}",
            dy.shape(),
            (len, d_in)
        )));
    }
    let mut grads = SsmLayerParams::zeros(d_in, p_dim);
    let mut dx = Matrix::zeros(len, d_in);
    let a = materialize_a(params);
    let skip = params.d_skip.as_slice();
    // On entry to iteration t this holds ā_{t+1} ⊙ λ_{t+1}.
    let mut lam = vec![T::zero(); d_in * p_dim];
    let mut d_delta = vec![T::zero(); d_in];
    let mut d_b = vec![T::zero(); p_dim];
    let mut d_c = vec![T::zero(); p_dim];
    let zero_state = vec![T::zero(); d_in * p_dim];

    for t in (0..len).rev() {
        let xt = cache.x.row(t);
        let dyt = dy.row(t);
        let bt = cache.b.row(t);
        let ct = cache.c.row(t);
        let delta = cache.delta.row(t);
        let ht = cache.state_at(t);
        let h_prev = if t > 0 { cache.state_at(t - 1) } else { &zero_state[..] };
        d_delta.iter_mut().for_each(|v| *v = T::zero());
        d_b.iter_mut().for_each(|v| *v = T::zero());
        d_c.iter_mut().for_each(|v| *v = T::zero());
        let dxt = dx.row_mut(t);

        for d in 0..d_in {
            let g_out = dyt[d];
            grads.d_skip.as_mut_slice()[d] += g_out * xt[d];
            dxt[d] += g_out * skip[d];
            for p in 0..p_dim {
                let i = d * p_dim + p;
                d_c[p] += g_out * ht[i];
                let lam_t = lam[i] + g_out * ct[p];
                let (a_bar, g) = zoh(a[i], delta[d]);
                let da_bar = lam_t * h_prev[i];
                let dg = lam_t * bt[p] * xt[d];
                d_b[p] += lam_t * g * xt[d];
                dxt[d] += lam_t * g * bt[p];
                let (dg_ddelta, dg_da) = zoh_input_grads(a[i], delta[d], a_bar);
                d_delta[d] += da_bar * a[i] * a_bar + dg * dg_ddelta;
                let da = da_bar * delta[d] * a_bar + dg * dg_da;
                // a = -exp(a_log)  =>  da/da_log = a
                grads.a_log.as_mut_slice()[i] += da * a[i];
                lam[i] = lam_t * a_bar;
            }
        }

        let st = cache.s.row(t);
        for d in 0..d_in {
            let ds = d_delta[d] * sigmoid(st[d]);
            if ds == T::zero() {
                continue;
            }
            grads.b_delta.as_mut_slice()[d] += ds;
            let w = params.w_delta.row(d);
            let gw = grads.w_delta.row_mut(d);
            for j in 0..d_in {
                gw[j] += ds * xt[j];
                dxt[j] += ds * w[j];
            }
        }
        for p in 0..p_dim {
            let (gb, gc) = (d_b[p], d_c[p]);
            grads.b_b.as_mut_slice()[p] += gb;
            grads.b_c.as_mut_slice()[p] += gc;
            let wb = params.w_b.row(p);
            let wc = params.w_c.row(p);
            for j in 0..d_in {
                dxt[j] += gb * wb[j] + gc * wc[j];
            }
            let gwb = grads.w_b.row_mut(p);
            for j in 0..d_in {
                gwb[j] += gb * xt[j];
            }
            let gwc = grads.w_c.row_mut(p);
            for j in 0..d_in {
                gwc[j] += gc * xt[j];
            }
        }
    }
    Ok((dx, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Δ = softplus(0) = ln 2`, `a = -1`  ⇒  `ā = 1/2`, input factor `1/2`,
    /// so `B = 2` gives `b̄ = 1`; `C = 2`, no feedthrough.
    fn frozen_scalar() -> SsmLayerParams<f64> {
        let mut p = SsmLayerParams::zeros(1, 1);
        p.b_b = Matrix::filled(1, 1, 2.0);
        p.b_c = Matrix::filled(1, 1, 2.0);
        p
    }

    #[test]
    fn discretize_reference_values() {
        let (a_bar, b_bar) = discretize(-1.0f64, 1.0, 0.1).unwrap();
        assert!((a_bar - 0.904_837_418_035_959_6).abs() < 1e-12);
        assert!((b_bar - 0.095_162_581_964_040_4).abs() < 1e-12);

        let (a_bar, b_bar) = discretize(0.0f64, 1.0, 0.1).unwrap();
        assert_eq!(a_bar, 1.0);
        assert!((b_bar - 0.1).abs() < 1e-15);

        for delta in [1e-3, 0.5, 3.0] {
            assert_eq!(discretize(-2.0f64, 0.0, delta).unwrap().1, 0.0);
        }
    }

    #[test]
    fn discretize_rejects_non_positive_step() {
        assert!(discretize(-1.0f64, 1.0, 0.0).is_err());
        assert!(discretize(-1.0f64, 1.0, -0.1).is_err());
        assert!(discretize(-1.0f64, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn series_branch_is_continuous() {
        let a = -1.0f64;
        for delta in [0.99e-6, 1.01e-6] {
            let exact = (delta * a).exp_m1() / a;
            assert!((zoh(a, delta).1 - exact).abs() / exact < 1e-12);
        }
    }

    #[test]
    fn frozen_scalar_unrolls_by_hand() {
        let p = frozen_scalar();
        let x = Matrix::filled(3, 1, 1.0);
        let (y, cache) = scan_forward(&p, &x).unwrap();
        let want_h = [1.0, 1.5, 1.75];
        let want_y = [2.0, 3.0, 3.5];
        for t in 0..3 {
            assert!((cache.state_at(t)[0] - want_h[t]).abs() < 1e-12);
            assert!((y.get(t, 0) - want_y[t]).abs() < 1e-12);
        }
        let naive = naive_unroll(&p, &x).unwrap();
        assert!(naive.max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn frozen_scalar_output_gradient_is_last_state() {
        let p = frozen_scalar();
        let x = Matrix::filled(3, 1, 1.0);
        let (_, cache) = scan_forward(&p, &x).unwrap();
        let dy = Matrix::from_vec(3, 1, vec![0.0, 0.0, 1.0]);
        let (_, g) = scan_backward(&p, &cache, &dy).unwrap();
        assert!((g.b_c.get(0, 0) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = crate::rng::stream(3, crate::rng::Stream::Aux, 0);
        let p = SsmLayerParams::<f64>::init(4, 3, &mut rng);
        let y = scan(&p, &Matrix::zeros(10, 4)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = crate::rng::stream(4, crate::rng::Stream::Aux, 0);
        let p = SsmLayerParams::<f64>::init(3, 2, &mut rng);
        let x = Matrix::uniform(6, 3, 1.0, &mut rng);
        let (_, cache) = scan_forward(&p, &x).unwrap();
        let (dx, g) = scan_backward(&p, &cache, &Matrix::zeros(6, 3)).unwrap();
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
        use crate::params::Parameters;
        assert_eq!(g.sum_of_squares(), 0.0);
    }

    #[test]
    fn non_finite_input_names_the_step() {
        let p = SsmLayerParams::<f64>::zeros(2, 2);
        let mut x = Matrix::zeros(5, 2);
        x.set(3, 1, f64::NAN);
        match scan_forward(&p, &x) {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 3),
            other => panic!("expected NonFinite, got {other:?}"),
        }
        assert!(matches!(naive_unroll(&p, &x), Err(Error::NonFinite { step: 3, .. })));
    }

    #[test]
    fn backward_rejects_length_mismatch() {
        let p = SsmLayerParams::<f64>::zeros(2, 2);
        let (_, cache) = scan_forward(&p, &Matrix::zeros(4, 2)).unwrap();
        assert!(scan_backward(&p, &cache, &Matrix::zeros(5, 2)).is_err());
    }

    #[test]
    fn single_step_matches_closed_form() {
        let mut rng = crate::rng::stream(5, crate::rng::Stream::Aux, 0);
        let p = SsmLayerParams::<f64>::init(2, 3, &mut rng);
        let x = Matrix::uniform(1, 2, 1.0, &mut rng);
        let y = scan(&p, &x).unwrap();
        for d in 0..2 {
            let s = p.b_delta.get(0, d) + dot(p.w_delta.row(d), x.row(0));
            let delta = softplus(s);
            let mut want = p.d_skip.get(0, d) * x.get(0, d);
            for q in 0..3 {
                let b = p.b_b.get(0, q) + dot(p.w_b.row(q), x.row(0));
                let c = p.b_c.get(0, q) + dot(p.w_c.row(q), x.row(0));
                let (_, b_bar) = discretize(p.a(d, q), b, delta).unwrap();
                want += c * b_bar * x.get(0, d);
            }
            assert!((y.get(0, d) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn incremental_scan_matches_one_shot() {
        let mut rng = crate::rng::stream(6, crate::rng::Stream::Aux, 0);
        let p = SsmLayerParams::<f64>::init(3, 4, &mut rng);
        let x = Matrix::uniform(12, 3, 1.0, &mut rng);
        let full = scan(&p, &x).unwrap();
        let mut state = SsmState::new(3, 4);
        let a = scan_with_state(&p, &x.slice_rows(0, 5), &mut state).unwrap();
        let b = scan_with_state(&p, &x.slice_rows(5, 12), &mut state).unwrap();
        assert_eq!(state.step, 12);
        assert_eq!(Matrix::vstack(&a, &b), full);
    }
}
