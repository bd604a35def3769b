//! Named-tensor view over parameter structs, shared by the optimizer,
//! checkpointing and gradient checking.

use crate::tensor::{Linear, Matrix, Real};

/// A parameter struct exposes its tensors under stable dotted names. Gradient
/// structs have the same type as the parameters they differentiate, so two
/// instances always enumerate tensors in the same order.
pub trait Parameters<T: Real> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    fn zero_grads(&mut self) {
        for (_, m) in self.tensors_mut() {
            m.fill_zero();
        }
    }

    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(src) {
            dst.add_assign(src);
        }
    }

    fn scale_all(&mut self, s: T) {
        for (_, m) in self.tensors_mut() {
            m.scale(s);
        }
    }

    fn sum_of_squares(&self) -> T {
        let mut acc = T::zero();
        for (_, m) in self.tensors() {
            for &v in m.as_slice() {
                acc += v * v;
            }
        }
        acc
    }

    /// Name of the first tensor holding a NaN or infinity.
    fn first_non_finite(&self) -> Option<String> {
        self.tensors().into_iter().find(|(_, m)| !m.is_finite()).map(|(n, _)| n)
    }
}

/// Zeroed copy with identical layout, used as a gradient accumulator.
pub fn zeros_like<T: Real, P: Parameters<T> + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.zero_grads();
    z
}

pub(crate) fn prefixed<'a, M>(prefix: &str, items: Vec<(String, M)>) -> Vec<(String, M)>
where
    M: 'a,
{
    items.into_iter().map(|(n, m)| (format!("{prefix}.{n}"), m)).collect()
}

macro_rules! impl_parameters {
    ($ty:ident { leaves: [$($leaf:ident),* $(,)?], nodes: [$($node:ident),* $(,)?] }) => {
        impl<T: $crate::tensor::Real> $crate::params::Parameters<T> for $ty<T> {
            #[allow(unused_mut)]
            fn tensors(&self) -> Vec<(String, &$crate::tensor::Matrix<T>)> {
                let mut out: Vec<(String, &$crate::tensor::Matrix<T>)> =
                    vec![$( (stringify!($leaf).to_string(), &self.$leaf) ),*];
                $( out.extend($crate::params::prefixed(stringify!($node), self.$node.tensors())); )*
                out
            }

            #[allow(unused_mut)]
            fn tensors_mut(&mut self) -> Vec<(String, &mut $crate::tensor::Matrix<T>)> {
                let mut out: Vec<(String, &mut $crate::tensor::Matrix<T>)> =
                    vec![$( (stringify!($leaf).to_string(), &mut self.$leaf) ),*];
                $( out.extend($crate::params::prefixed(stringify!($node), self.$node.tensors_mut())); )*
                out
            }
        }
    };
}
pub(crate) use impl_parameters;

impl_parameters!(Linear {
    leaves: [weight, bias],
    nodes: []
});

impl<T: Real> Parameters<T> for Matrix<T> {
    fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        vec![("value".to_string(), self)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        vec![("value".to_string(), self)]
    }
}
