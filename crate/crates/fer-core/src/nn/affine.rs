//! Fully connected layer.

use ndarray::{Array1, Array2, Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{fan_in_uniform, zero_bias, Param};

/// `y = x W^T + b` over a batch of row vectors.
#[derive(Debug, Clone)]
pub struct Affine {
    /// Shape `(out, in)`.
    pub weight: Param,
    /// Shape `(out,)`.
    pub bias: Param,
}

impl Affine {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::new(fan_in_uniform(rng, in_dim, &[out_dim, in_dim]), true),
            bias: Param::new(zero_bias(&[out_dim]), false),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim());
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("weight is 2-d");
        let b = self
            .bias
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("bias is 1-d");
        let mut y = x.dot(&w.t());
        y += &b;
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// `x` must be the forward input that produced `grad_out`.
    pub fn backward(&mut self, x: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(grad_out.ncols(), self.out_dim());
        debug_assert_eq!(grad_out.nrows(), x.nrows());
        let w = self
            .weight
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("weight is 2-d");
        {
            let mut gw = self
                .weight
                .grad
                .view_mut()
                .into_dimensionality::<Ix2>()
                .expect("weight grad is 2-d");
            gw += &grad_out.t().dot(x);
        }
        {
            let gb_new: Array1<f64> = grad_out.sum_axis(Axis(0));
            let mut gb = self
                .bias
                .grad
                .view_mut()
                .into_dimensionality::<Ix1>()
                .expect("bias grad is 1-d");
            gb += &gb_new;
        }
        grad_out.dot(&w)
    }
}
