use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self { kernel, stride }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config(format!("invalid pool spec {self:?}")));
        }
        Ok(())
    }

    pub fn out_size(&self, input: usize) -> Result<usize> {
        if input < self.kernel {
            return Err(Error::dim(
                "maxpool",
                format!("window {} larger than input extent {input}", self.kernel),
            ));
        }
        Ok((input - self.kernel) / self.stride + 1)
    }
}

/// Flat input index of the maximum of every output window.
#[derive(Debug, Clone, Default)]
pub struct PoolCtx {
    saved: Option<(Vec<usize>, Vec<usize>)>, // argmax, input dims
}

impl PoolCtx {
    pub fn argmax(&self) -> Option<&[usize]> {
        self.saved.as_ref().map(|(a, _)| a.as_slice())
    }
}

/// Max pooling without padding. Ties keep the first (lowest flat index) element.
pub fn maxpool_forward(input: &Tensor, spec: &PoolSpec) -> Result<(Tensor, Vec<usize>)> {
    spec.validate()?;
    input.expect_rank("maxpool", "input", 3)?;
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let oh = spec.out_size(h)?;
    let ow = spec.out_size(w)?;
    let x = input.data();
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = vec![0usize; c * oh * ow];
    let o = out.data_mut();
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * spec.stride * w + ox * spec.stride;
                let mut best = x[best_idx];
                for ky in 0..spec.kernel {
                    let row = base + (oy * spec.stride + ky) * w + ox * spec.stride;
                    for (kx, &v) in x[row..row + spec.kernel].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                let oi = (ch * oh + oy) * ow + ox;
                o[oi] = best;
                argmax[oi] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool_forward_cached(input: &Tensor, spec: &PoolSpec, ctx: &mut PoolCtx) -> Result<Tensor> {
    let (out, argmax) = maxpool_forward(input, spec)?;
    ctx.saved = Some((argmax, input.dims().to_vec()));
    Ok(out)
}

/// Routes each upstream gradient to the input position that won its window.
pub fn maxpool_backward(ctx: &PoolCtx, grad_out: &Tensor) -> Result<Tensor> {
    let (argmax, in_dims) = ctx
        .saved
        .as_ref()
        .ok_or_else(|| Error::State("maxpool backward called without a forward context".into()))?;
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(
            "maxpool",
            format!(
                "upstream gradient has {} elements, forward produced {}",
                grad_out.len(),
                argmax.len()
            ),
        ));
    }
    let mut gx = Tensor::zeros(in_dims);
    let dx = gx.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        dx[idx] += g;
    }
    Ok(gx)
}
