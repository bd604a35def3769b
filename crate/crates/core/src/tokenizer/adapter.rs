use rand::Rng;

use crate::params::impl_parameters;
use crate::sequencer::TokenGrid;
use crate::tensor::{Linear, Matrix, Real};

/// Residual linear adapter of one hierarchy: `x ↦ W x + b + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams<T> {
    /// `[C × C]`
    pub weight: Matrix<T>,
    /// `[1 × C]`
    pub bias: Matrix<T>,
}

impl_parameters!(AdapterParams {
    leaves: [weight, bias],
    nodes: []
});

impl<T: Real> AdapterParams<T> {
    /// Zero map, so the adapter starts as the identity.
    pub fn zeros(channels: usize) -> Self {
        Self {
            weight: Matrix::zeros(channels, channels),
            bias: Matrix::zeros(1, channels),
        }
    }

    pub fn random<R: Rng>(channels: usize, bound: f64, rng: &mut R) -> Self {
        Self {
            weight: Matrix::uniform(channels, channels, bound, rng),
            bias: Matrix::uniform(1, channels, bound, rng),
        }
    }

    fn as_linear(&self) -> Linear<T> {
        Linear {
            weight: self.weight.clone(),
            bias: self.bias.clone(),
        }
    }

    /// Adapts a token matrix `[cells × C]`.
    pub fn apply(&self, tokens: &Matrix<T>) -> Matrix<T> {
        let mut out = self.as_linear().forward(tokens);
        out.add_assign(tokens);
        out
    }
}

pub fn adapt<T: Real>(params: &AdapterParams<T>, grid: &TokenGrid<T>) -> TokenGrid<T> {
    let out = params.apply(grid.tokens());
    TokenGrid::new(out, grid.height(), grid.width())
        .expect("adapter preserves shape")
        .with_hierarchy(grid.hierarchy, grid.downsample)
}

/// Gradients of the adapter parameters given `dL/d(output)`; the frozen
/// input receives none.
pub fn adapt_backward<T: Real>(tokens: &Matrix<T>, d_out: &Matrix<T>, grads: &mut AdapterParams<T>) {
    let c = tokens.cols();
    for r in 0..tokens.rows() {
        let (x, g) = (tokens.row(r), d_out.row(r));
        for o in 0..c {
            grads.bias.as_mut_slice()[o] += g[o];
            let gw = grads.weight.row_mut(o);
            for i in 0..c {
                gw[i] += g[o] * x[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_adapter_is_identity() {
        let mut rng = stream(1, Stream::Aux, 0);
        let g = TokenGrid::new(Matrix::<f64>::uniform(6, 4, 1.0, &mut rng), 2, 3).unwrap();
        assert_eq!(adapt(&AdapterParams::zeros(4), &g), g);
    }

    #[test]
    fn identity_weight_doubles() {
        let mut rng = stream(2, Stream::Aux, 0);
        let g = TokenGrid::new(Matrix::<f64>::uniform(6, 4, 1.0, &mut rng), 3, 2).unwrap();
        let p = AdapterParams {
            weight: Matrix::identity(4),
            bias: Matrix::zeros(1, 4),
        };
        let out = adapt(&p, &g);
        for (a, b) in out.tokens().as_slice().iter().zip(g.tokens().as_slice()) {
            assert_eq!(*a, 2.0 * b);
        }
    }
}
