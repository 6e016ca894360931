//! Direct 2-D cross-correlation over a single `[C, H, W]` image.
//!
//! Every output element is accumulated as `bias` followed by the products
//! `w[co, ci, ky, kx] * x[ci, iy, ix]` in ascending `(ci, ky, kx)` order, with
//! padded positions skipped. The loops are arranged plane-wise so the inner
//! loop vectorizes, but the per-element summation order is unchanged, which
//! keeps results bit-identical to a naive nested-loop evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel,
            stride,
            pad,
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!("invalid conv spec {self:?}")));
        }
        Ok(())
    }

    /// Output extent for an input extent, or an error if the window does not fit.
    pub fn out_size(&self, input: usize) -> Result<usize> {
        let padded = input + 2 * self.pad;
        if padded < self.kernel {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {} larger than padded input {padded}", self.kernel),
            ));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }
}

/// Forward context kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ConvCtx {
    input: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check_shapes(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    input.expect_rank("conv2d", "input", 3)?;
    if input.dims()[0] != spec.in_channels {
        return Err(Error::dim(
            "conv2d",
            format!(
                "input channel dim is {}, spec expects {}",
                input.dims()[0],
                spec.in_channels
            ),
        ));
    }
    weights.expect_dims("conv2d", "weights", &spec.weight_dims())?;
    bias.expect_dims("conv2d", "bias", &[spec.out_channels])?;
    let oh = spec.out_size(input.dims()[1])?;
    let ow = spec.out_size(input.dims()[2])?;
    Ok((oh, ow))
}

/// Range of output indices whose input index `o*stride + k - pad` falls in `[0, n)`.
#[inline]
fn valid_range(out_len: usize, n: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad  and  o*stride + k - pad < n
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let limit = n + pad; // o*stride + k < n + pad
    let hi = if limit <= k {
        0
    } else {
        ((limit - k - 1) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (oh, ow) = check_shapes(input, weights, bias, spec)?;
    let [_, ih, iw] = [input.dims()[0], input.dims()[1], input.dims()[2]];
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad);
    let x = input.data();
    let w = weights.data();
    let mut out = Tensor::zeros(&[spec.out_channels, oh, ow]);
    let o = out.data_mut();

    for co in 0..spec.out_channels {
        let plane = &mut o[co * oh * ow..(co + 1) * oh * ow];
        plane.fill(bias.data()[co]);
        for ci in 0..spec.in_channels {
            let xin = &x[ci * ih * iw..(ci + 1) * ih * iw];
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_range(oh, ih, ky, s, p);
                for kx in 0..k {
                    let wv = w[((co * spec.in_channels + ci) * k + ky) * k + kx];
                    let (ox_lo, ox_hi) = valid_range(ow, iw, kx, s, p);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let row = &mut plane[oy * ow..(oy + 1) * ow];
                        let src = &xin[iy * iw..(iy + 1) * iw];
                        if s == 1 {
                            let off = ox_lo + kx - p;
                            let n = ox_hi - ox_lo;
                            for (acc, &xv) in row[ox_lo..ox_hi].iter_mut().zip(&src[off..off + n]) {
                                *acc += wv * xv;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                row[ox] += wv * src[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Forward pass that records what the backward pass needs.
pub fn conv2d_forward_cached(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
    ctx: &mut ConvCtx,
) -> Result<Tensor> {
    let out = conv2d_forward(input, weights, bias, spec)?;
    ctx.input = Some(input.clone());
    Ok(out)
}

/// Gradients of a conv layer. The input gradient is only computed when
/// `want_input_grad` is set (the first layer of a network has no use for it).
pub fn conv2d_backward(
    ctx: &ConvCtx,
    weights: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
    want_input_grad: bool,
) -> Result<ConvGrads> {
    let input = ctx
        .input
        .as_ref()
        .ok_or_else(|| Error::State("conv2d backward called without a forward context".into()))?;
    let bias_dims = Tensor::zeros(&[spec.out_channels]);
    let (oh, ow) = check_shapes(input, weights, &bias_dims, spec)?;
    grad_out.expect_dims("conv2d", "upstream gradient", &[spec.out_channels, oh, ow])?;
    let [ih, iw] = [input.dims()[1], input.dims()[2]];
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad);
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();

    let mut gw = Tensor::zeros(&spec.weight_dims());
    let mut gb = Tensor::zeros(&[spec.out_channels]);
    let mut gx = want_input_grad.then(|| Tensor::zeros(input.dims()));

    for co in 0..spec.out_channels {
        let gplane = &g[co * oh * ow..(co + 1) * oh * ow];
        gb.data_mut()[co] = gplane.iter().sum();
        for ci in 0..spec.in_channels {
            let xin = &x[ci * ih * iw..(ci + 1) * ih * iw];
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_range(oh, ih, ky, s, p);
                for kx in 0..k {
                    let widx = ((co * spec.in_channels + ci) * k + ky) * k + kx;
                    let wv = w[widx];
                    let (ox_lo, ox_hi) = valid_range(ow, iw, kx, s, p);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let mut acc = 0.0f32;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            let off = ox_lo + kx - p;
                            let n = ox_hi - ox_lo;
                            let src = &xin[iy * iw + off..iy * iw + off + n];
                            for (&gv, &xv) in grow[ox_lo..ox_hi].iter().zip(src) {
                                acc += gv * xv;
                            }
                            if let Some(gx) = gx.as_mut() {
                                let dst = &mut gx.data_mut()[ci * ih * iw + iy * iw + off..ci * ih * iw + iy * iw + off + n];
                                for (d, &gv) in dst.iter_mut().zip(&grow[ox_lo..ox_hi]) {
                                    *d += wv * gv;
                                }
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ox * s + kx - p;
                                acc += grow[ox] * xin[iy * iw + ix];
                                if let Some(gx) = gx.as_mut() {
                                    gx.data_mut()[ci * ih * iw + iy * iw + ix] += wv * grow[ox];
                                }
                            }
                        }
                    }
                    gw.data_mut()[widx] = acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}
