//! Minimal f64 layers with explicit forward caches and hand-written
//! backward passes. Everything the training loop updates is a [`Param`];
//! layers accumulate into `Param::grad` and the optimizer consumes it.

mod affine;
mod conv;

pub use affine::Affine;
pub use conv::{flatten_images, AvgPool2, Conv2d, GlobalAvgPool};

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
}

pub fn shape_error(expected: impl Into<String>, got: impl Into<String>) -> NnError {
    NnError::Shape {
        expected: expected.into(),
        got: got.into(),
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// Whether weight decay applies; biases opt out.
    pub decay: bool,
}

impl Param {
    pub fn new(value: ArrayD<f64>, decay: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad, decay }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Fan-in-scaled uniform weight init,
/// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, sized for rectifier stacks.
pub fn fan_in_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> ArrayD<f64> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches data length")
}

/// Zero bias init; keeps fresh layers image-dependent instead of
/// bias-dominated.
pub fn zero_bias(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}

/// The nonlinearity between the transformation network's two affine maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the pre-activation input.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}
