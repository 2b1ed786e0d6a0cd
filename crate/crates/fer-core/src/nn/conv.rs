//! Same-padding stride-1 convolution via im2col plus GEMM, and the two
//! pooling layers used by the reference encoder.

use ndarray::{Array1, Array2, Array4, Axis};
use rand_chacha::ChaCha8Rng;

use super::{fan_in_uniform, zero_bias, Param};

/// Unrolls `(B, C, H, W)` into `(B*H*W, C*k*k)` patch rows for a
/// stride-1, same-padding convolution.
fn im2col(x: &Array4<f64>, k: usize, pad: usize) -> Array2<f64> {
    let (b, c, h, w) = x.dim();
    let xs = x.as_slice().expect("input is standard layout");
    let mut cols = Array2::<f64>::zeros((b * h * w, c * k * k));
    let cs = cols.as_slice_mut().expect("freshly allocated");
    let row_len = c * k * k;
    for bi in 0..b {
        for oy in 0..h {
            for ox in 0..w {
                let row = ((bi * h + oy) * w + ox) * row_len;
                for ci in 0..c {
                    let plane = (bi * c + ci) * h * w;
                    for dy in 0..k {
                        let iy = oy + dy;
                        if iy < pad || iy >= h + pad {
                            continue;
                        }
                        let iy = iy - pad;
                        let base = row + (ci * k + dy) * k;
                        let src = plane + iy * w;
                        for dx in 0..k {
                            let ix = ox + dx;
                            if ix < pad || ix >= w + pad {
                                continue;
                            }
                            cs[base + dx] = xs[src + (ix - pad)];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-row gradients back onto the
/// input grid.
fn col2im(cols: &Array2<f64>, b: usize, c: usize, h: usize, w: usize, k: usize, pad: usize) -> Array4<f64> {
    let cs = cols.as_slice().expect("cols is standard layout");
    let mut x = Array4::<f64>::zeros((b, c, h, w));
    let xs = x.as_slice_mut().expect("freshly allocated");
    let row_len = c * k * k;
    for bi in 0..b {
        for oy in 0..h {
            for ox in 0..w {
                let row = ((bi * h + oy) * w + ox) * row_len;
                for ci in 0..c {
                    let plane = (bi * c + ci) * h * w;
                    for dy in 0..k {
                        let iy = oy + dy;
                        if iy < pad || iy >= h + pad {
                            continue;
                        }
                        let iy = iy - pad;
                        let base = row + (ci * k + dy) * k;
                        let dst = plane + iy * w;
                        for dx in 0..k {
                            let ix = ox + dx;
                            if ix < pad || ix >= w + pad {
                                continue;
                            }
                            xs[dst + (ix - pad)] += cs[base + dx];
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2-D convolution, stride 1, odd kernel, same padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// Shape `(out_ch, in_ch, k, k)`.
    pub weight: Param,
    /// Shape `(out_ch,)`.
    pub bias: Param,
    kernel: usize,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let fan_in = in_ch * kernel * kernel;
        Self {
            weight: Param::new(fan_in_uniform(rng, fan_in, &[out_ch, in_ch, kernel, kernel]), true),
            bias: Param::new(zero_bias(&[out_ch]), false),
        kernel,
        }
    }

    pub fn in_ch(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_ch(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn weight_matrix(&self) -> Array2<f64> {
        let oc = self.out_ch();
        let cols = self.weight.value.len() / oc;
        self.weight
            .value
            .view()
            .into_shape_with_order((oc, cols))
            .expect("weight is contiguous")
            .to_owned()
    }

    fn forward_from_cols(&self, cols: &Array2<f64>, b: usize, h: usize, w: usize) -> Array4<f64> {
        let oc = self.out_ch();
        let wmat = self.weight_matrix();
        let mut y2 = cols.dot(&wmat.t()); // (BHW, oc)
        let bias = self
            .bias
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("bias is 1-d");
        y2 += &bias;
        let y = y2
            .into_shape_with_order((b, h, w, oc))
            .expect("consistent shape");
        let mut out = Array4::<f64>::zeros((b, oc, h, w));
        out.assign(&y.permuted_axes([0, 3, 1, 2]));
        out
    }

    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (b, _, h, w) = x.dim();
        let cols = im2col(x, self.kernel, self.kernel / 2);
        self.forward_from_cols(&cols, b, h, w)
    }

    /// Forward pass that also returns the patch matrix needed by
    /// [`Conv2d::backward`].
    pub fn forward_train(&self, x: &Array4<f64>) -> (Array4<f64>, Array2<f64>) {
        let (b, _, h, w) = x.dim();
        let cols = im2col(x, self.kernel, self.kernel / 2);
        let y = self.forward_from_cols(&cols, b, h, w);
        (y, cols)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cols: &Array2<f64>, grad_out: &Array4<f64>) -> Array4<f64> {
        let (b, oc, h, w) = grad_out.dim();
        let ic = self.in_ch();
        let mut g2 = Array2::<f64>::zeros((b * h * w, oc));
        {
            let perm = grad_out.view().permuted_axes([0, 2, 3, 1]); // (B,H,W,oc)
            let flat = perm
                .to_shape((b * h * w, oc))
                .expect("consistent shape");
            g2.assign(&flat);
        }
        {
            let gw2 = g2.t().dot(cols); // (oc, ic*k*k)
            let mut gw = self
                .weight
                .grad
                .view_mut()
                .into_shape_with_order((oc, ic * self.kernel * self.kernel))
                .expect("weight grad is contiguous");
            gw += &gw2;
        }
        {
            let gb_new: Array1<f64> = g2.sum_axis(Axis(0));
            let mut gb = self
                .bias
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .expect("bias grad is 1-d");
            gb += &gb_new;
        }
        let wmat = self.weight_matrix();
        let gcols = g2.dot(&wmat); // (BHW, ic*k*k)
        col2im(&gcols, b, ic, h, w, self.kernel, self.kernel / 2)
    }
}

/// 2x2 average pooling, stride 2. Spatial dims must be even.
#[derive(Debug, Clone, Copy, Default)]
pub struct AvgPool2;

impl AvgPool2 {
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (b, c, h, w) = x.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims");
        let mut y = Array4::<f64>::zeros((b, c, h / 2, w / 2));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..h / 2 {
                    for ox in 0..w / 2 {
                        let s = x[[bi, ci, 2 * oy, 2 * ox]]
                            + x[[bi, ci, 2 * oy, 2 * ox + 1]]
                            + x[[bi, ci, 2 * oy + 1, 2 * ox]]
                            + x[[bi, ci, 2 * oy + 1, 2 * ox + 1]];
                        y[[bi, ci, oy, ox]] = s * 0.25;
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, grad_out: &Array4<f64>) -> Array4<f64> {
        let (b, c, oh, ow) = grad_out.dim();
        let mut gx = Array4::<f64>::zeros((b, c, oh * 2, ow * 2));
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = grad_out[[bi, ci, oy, ox]] * 0.25;
                        gx[[bi, ci, 2 * oy, 2 * ox]] = g;
                        gx[[bi, ci, 2 * oy, 2 * ox + 1]] = g;
                        gx[[bi, ci, 2 * oy + 1, 2 * ox]] = g;
                        gx[[bi, ci, 2 * oy + 1, 2 * ox + 1]] = g;
                    }
                }
            }
        }
        gx
    }
}

/// Mean over the spatial grid: `(B, C, H, W) -> (B, C)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalAvgPool;

impl GlobalAvgPool {
    pub fn forward(&self, x: &Array4<f64>) -> Array2<f64> {
        let (b, c, h, w) = x.dim();
        let flat = x
            .view()
            .into_shape_with_order((b, c, h * w))
            .expect("standard layout");
        flat.mean_axis(Axis(2)).expect("h*w > 0")
    }

    pub fn backward(&self, grad_out: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
        let (b, c) = grad_out.dim();
        let scale = 1.0 / (h * w) as f64;
        let mut gx = Array4::<f64>::zeros((b, c, h, w));
        for bi in 0..b {
            for ci in 0..c {
                let g = grad_out[[bi, ci]] * scale;
                gx.slice_mut(ndarray::s![bi, ci, .., ..]).fill(g);
            }
        }
        gx
    }
}

/// `(B, C, H, W) -> (B, C*H*W)` view copy for linear encoders.
pub fn flatten_images(x: &Array4<f64>) -> Array2<f64> {
    let (b, c, h, w) = x.dim();
    x.view()
        .into_shape_with_order((b, c * h * w))
        .expect("standard layout")
        .to_owned()
}
