//! Visual encoders and the small trainable networks around them: the
//! dimension-matching projection, the emotional-to-neutral transformation
//! network, and the baseline classifier head.

use std::any::Any;

use ndarray::{Array2, Array4};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::derive_seed;
use crate::nn::{
    flatten_images, shape_error, Activation, Affine, AvgPool2, Conv2d, GlobalAvgPool, NnError,
    Param,
};

pub const TRANSFORM_HIDDEN_DIM: usize = 128;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("unknown encoder id {0:?}")]
    Unknown(String),
    #[error("encoder {id:?} needs the optional pretrained-weights adapter; {hint}")]
    Unsupported { id: String, hint: &'static str },
    #[error(transparent)]
    Shape(#[from] NnError),
}

/// Opaque forward cache handed back to the encoder's backward pass.
pub struct EncoderCache(Box<dyn Any + Send>);

/// A trainable image encoder producing one `d_v`-dimensional row per image.
///
/// Forward passes are reentrant for fixed parameters; the training loop is
/// the only writer.
pub trait VisualEncoder: Send {
    fn id(&self) -> &'static str;
    /// Expected H = W of input images.
    fn input_size(&self) -> usize;
    /// Output dimension `d_v`, constant across calls.
    fn output_dim(&self) -> usize;
    fn forward(&self, images: &Array4<f64>) -> Result<Array2<f64>, NnError>;
    fn forward_train(&self, images: &Array4<f64>) -> Result<(Array2<f64>, EncoderCache), NnError>;
    /// Accumulates parameter gradients from `grad` (B x d_v).
    fn backward(&mut self, cache: EncoderCache, grad: &Array2<f64>);
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

fn check_images(images: &Array4<f64>, input_size: usize) -> Result<(), NnError> {
    let (_, c, h, w) = images.dim();
    if c != 3 || h != input_size || w != input_size {
        return Err(shape_error(
            format!("(B, 3, {input_size}, {input_size}) images"),
            format!("{:?}", images.dim()),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// tiny-cnn

/// Three conv-relu-pool blocks and a global average pool. The default
/// width ends at 64 channels, so `d_v = 64`.
pub struct TinyCnn {
    conv1: Conv2d,
    conv2: Conv2d,
    conv3: Conv2d,
    pool: AvgPool2,
    gap: GlobalAvgPool,
    input_size: usize,
}

struct TinyCnnCache {
    cols1: Array2<f64>,
    pre1: Array4<f64>,
    cols2: Array2<f64>,
    pre2: Array4<f64>,
    cols3: Array2<f64>,
    pre3: Array4<f64>,
    final_hw: usize,
}

fn relu_forward(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_backward(pre: &Array4<f64>, grad: &Array4<f64>) -> Array4<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(pre, |gv, &xv| {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

impl TinyCnn {
    /// `channels` are the three block widths; the last one is `d_v`.
    pub fn new(input_size: usize, channels: [usize; 3], rng: &mut ChaCha8Rng) -> Self {
        assert!(
            input_size % 8 == 0,
            "input size must be divisible by 8 for three pooling stages"
        );
        Self {
            conv1: Conv2d::new(3, channels[0], 3, rng),
            conv2: Conv2d::new(channels[0], channels[1], 3, rng),
            conv3: Conv2d::new(channels[1], channels[2], 3, rng),
            pool: AvgPool2,
            gap: GlobalAvgPool,
            input_size,
        }
    }

    pub fn default_width(input_size: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(input_size, [8, 16, 64], rng)
    }
}

impl VisualEncoder for TinyCnn {
    fn id(&self) -> &'static str {
        "tiny-cnn"
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn output_dim(&self) -> usize {
        self.conv3.out_ch()
    }

    fn forward(&self, images: &Array4<f64>) -> Result<Array2<f64>, NnError> {
        check_images(images, self.input_size)?;
        let p1 = self.pool.forward(&relu_forward(&self.conv1.forward(images)));
        let p2 = self.pool.forward(&relu_forward(&self.conv2.forward(&p1)));
        let p3 = self.pool.forward(&relu_forward(&self.conv3.forward(&p2)));
        Ok(self.gap.forward(&p3))
    }

    fn forward_train(&self, images: &Array4<f64>) -> Result<(Array2<f64>, EncoderCache), NnError> {
        check_images(images, self.input_size)?;
        let (pre1, cols1) = self.conv1.forward_train(images);
        let p1 = self.pool.forward(&relu_forward(&pre1));
        let (pre2, cols2) = self.conv2.forward_train(&p1);
        let p2 = self.pool.forward(&relu_forward(&pre2));
        let (pre3, cols3) = self.conv3.forward_train(&p2);
        let p3 = self.pool.forward(&relu_forward(&pre3));
        let out = self.gap.forward(&p3);
        let cache = TinyCnnCache {
            cols1,
            pre1,
            cols2,
            pre2,
            cols3,
            pre3,
            final_hw: self.input_size / 8,
        };
        Ok((out, EncoderCache(Box::new(cache))))
    }

    fn backward(&mut self, cache: EncoderCache, grad: &Array2<f64>) {
        let cache = cache
            .0
            .downcast::<TinyCnnCache>()
            .expect("cache produced by TinyCnn::forward_train");
        let g = self.gap.backward(grad, cache.final_hw, cache.final_hw);
        let g = relu_backward(&cache.pre3, &self.pool.backward(&g));
        let g = self.conv3.backward(&cache.cols3, &g);
        let g = relu_backward(&cache.pre2, &self.pool.backward(&g));
        let g = self.conv2.backward(&cache.cols2, &g);
        let g = relu_backward(&cache.pre1, &self.pool.backward(&g));
        let _ = self.conv1.backward(&cache.cols1, &g);
    }

    fn params(&self) -> Vec<&Param> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.conv3.weight,
            &self.conv3.bias,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.conv3.weight,
            &mut self.conv3.bias,
        ]
    }
}

// ---------------------------------------------------------------------------
// linear encoder

/// Flatten-plus-affine encoder; fast baseline for experiments and tests.
pub struct LinearEncoder {
    affine: Affine,
    input_size: usize,
}

impl LinearEncoder {
    pub fn new(input_size: usize, d_v: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            affine: Affine::new(3 * input_size * input_size, d_v, rng),
            input_size,
        }
    }
}

impl VisualEncoder for LinearEncoder {
    fn id(&self) -> &'static str {
        "linear"
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn output_dim(&self) -> usize {
        self.affine.out_dim()
    }

    fn forward(&self, images: &Array4<f64>) -> Result<Array2<f64>, NnError> {
        check_images(images, self.input_size)?;
        Ok(self.affine.forward(&flatten_images(images)))
    }

    fn forward_train(&self, images: &Array4<f64>) -> Result<(Array2<f64>, EncoderCache), NnError> {
        check_images(images, self.input_size)?;
        let flat = flatten_images(images);
        let out = self.affine.forward(&flat);
        Ok((out, EncoderCache(Box::new(flat))))
    }

    fn backward(&mut self, cache: EncoderCache, grad: &Array2<f64>) {
        let flat = cache
            .0
            .downcast::<Array2<f64>>()
            .expect("cache produced by LinearEncoder::forward_train");
        let _ = self.affine.backward(&flat, grad);
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.affine.weight, &self.affine.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.affine.weight, &mut self.affine.bias]
    }
}

/// Instantiates an encoder by id.
///
/// `resnet18` and `swin-t` are reachable through the [`VisualEncoder`]
/// interface but require an external pretrained-weights adapter, so the
/// registry refuses them with a hint rather than shipping untrained
/// look-alikes.
pub fn build_encoder(
    id: &str,
    input_size: usize,
    seed: u64,
) -> Result<Box<dyn VisualEncoder>, EncoderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "encoder-init", &[]));
    match id {
        "tiny-cnn" => Ok(Box::new(TinyCnn::default_width(input_size, &mut rng))),
        "linear" => Ok(Box::new(LinearEncoder::new(input_size, 64, &mut rng))),
        "resnet18" => Err(EncoderError::Unsupported {
            id: id.to_string(),
            hint: "expects 224x224 inputs and externally supplied weights",
        }),
        "swin-t" => Err(EncoderError::Unsupported {
            id: id.to_string(),
            hint: "expects 112x112 inputs and externally supplied weights",
        }),
        other => Err(EncoderError::Unknown(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// projection

/// Dimension-matching map applied to every encoder output before any loss
/// sees it. Present only when `d_v != d_t`; the identity otherwise.
pub enum Projection {
    Identity,
    Map(Affine),
}

impl Projection {
    pub fn new(d_v: usize, d_t: usize, rng: &mut ChaCha8Rng) -> Self {
        if d_v == d_t {
            Projection::Identity
        } else {
            Projection::Map(Affine::new(d_v, d_t, rng))
        }
    }

    pub fn forward(&self, v: &Array2<f64>) -> Array2<f64> {
        match self {
            Projection::Identity => v.clone(),
            Projection::Map(map) => map.forward(v),
        }
    }

    /// Returns the projected batch plus the cache for [`Projection::backward`].
    pub fn forward_train(&self, v: &Array2<f64>) -> (Array2<f64>, Option<Array2<f64>>) {
        match self {
            Projection::Identity => (v.clone(), None),
            Projection::Map(map) => (map.forward(v), Some(v.clone())),
        }
    }

    pub fn backward(&mut self, cache: &Option<Array2<f64>>, grad: &Array2<f64>) -> Array2<f64> {
        match (self, cache) {
            (Projection::Identity, None) => grad.clone(),
            (Projection::Map(map), Some(input)) => map.backward(input, grad),
            _ => unreachable!("cache must come from the matching forward_train"),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Projection::Identity => vec![],
            Projection::Map(map) => vec![&map.weight, &map.bias],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Projection::Identity => vec![],
            Projection::Map(map) => vec![&mut map.weight, &mut map.bias],
        }
    }
}

// ---------------------------------------------------------------------------
// transformation network

/// The emotional-to-neutral transformation: a 2-layer MLP mapping a
/// representation to a predicted neutral representation in the same space
/// (`d_t -> 128 -> d_t`).
pub struct TransformNetwork {
    l1: Affine,
    l2: Affine,
    activation: Activation,
}

/// Forward cache for [`TransformNetwork::backward`].
pub struct TransformCache {
    input: Array2<f64>,
    pre: Array2<f64>,
}

impl TransformNetwork {
    pub fn new(d_t: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        Self {
            l1: Affine::new(d_t, TRANSFORM_HIDDEN_DIM, rng),
            l2: Affine::new(TRANSFORM_HIDDEN_DIM, d_t, rng),
            activation,
        }
    }

    pub fn dim(&self) -> usize {
        self.l1.in_dim()
    }

    pub fn forward(&self, reps: &Array2<f64>) -> Array2<f64> {
        let pre = self.l1.forward(reps);
        let hidden = pre.mapv(|x| self.activation.apply(x));
        self.l2.forward(&hidden)
    }

    pub fn forward_train(&self, reps: &Array2<f64>) -> (Array2<f64>, TransformCache) {
        let pre = self.l1.forward(reps);
        let hidden = pre.mapv(|x| self.activation.apply(x));
        let out = self.l2.forward(&hidden);
        (
            out,
            TransformCache {
                input: reps.clone(),
                pre,
            },
        )
    }

    /// Accumulates parameter gradients and returns the gradient with
    /// respect to the input representations.
    pub fn backward(&mut self, cache: &TransformCache, grad_out: &Array2<f64>) -> Array2<f64> {
        let hidden = cache.pre.mapv(|x| self.activation.apply(x));
        let mut grad_hidden = self.l2.backward(&hidden, grad_out);
        grad_hidden.zip_mut_with(&cache.pre, |g, &x| *g *= self.activation.derivative(x));
        self.l1.backward(&cache.input, &grad_hidden)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.l1.weight, &self.l1.bias, &self.l2.weight, &self.l2.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.l1.weight,
            &mut self.l1.bias,
            &mut self.l2.weight,
            &mut self.l2.bias,
        ]
    }

    /// Test hook: zero the final affine map so the output equals its bias.
    pub fn final_layer_mut(&mut self) -> &mut Affine {
        &mut self.l2
    }
}

// ---------------------------------------------------------------------------
// classifier head (baseline ablation arm)

/// Affine map from representations to per-class logits; only the baseline
/// ablation arm trains one.
pub struct ClassifierHead {
    pub affine: Affine,
}

impl ClassifierHead {
    pub fn new(d_t: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            affine: Affine::new(d_t, n_classes, rng),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.affine.out_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.affine.weight, &self.affine.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.affine.weight, &mut self.affine.bias]
    }
}

// ---------------------------------------------------------------------------
// operations

/// Encoder plus projection: images to `B x d_t` representations. No
/// normalization is applied here.
pub fn encode(
    encoder: &dyn VisualEncoder,
    projection: &Projection,
    images: &Array4<f64>,
) -> Result<Array2<f64>, NnError> {
    let v = encoder.forward(images)?;
    Ok(projection.forward(&v))
}

/// Maps a batch of representations to predicted neutral representations.
pub fn transform_to_neutral(
    net: &TransformNetwork,
    reps: &Array2<f64>,
) -> Result<Array2<f64>, NnError> {
    if reps.ncols() != net.dim() {
        return Err(shape_error(
            format!("(B, {}) representations", net.dim()),
            format!("{:?}", reps.dim()),
        ));
    }
    Ok(net.forward(reps))
}

/// Per-class logits for the baseline arm.
pub fn classify(head: &ClassifierHead, reps: &Array2<f64>) -> Result<Array2<f64>, NnError> {
    if reps.ncols() != head.affine.in_dim() {
        return Err(shape_error(
            format!("(B, {}) representations", head.affine.in_dim()),
            format!("{:?}", reps.dim()),
        ));
    }
    Ok(head.affine.forward(reps))
}
