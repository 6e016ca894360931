//! Across-channel local response normalization:
//! `out[c] = in[c] / (k + alpha/n * sum_{j in window(c)} in[j]^2)^beta`
//! where `window(c)` spans `n` channels centred on `c`, clipped to the tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnSpec {
    pub local_size: usize,
    pub alpha: f32,
    pub beta: f32,
    pub k: f32,
}

impl Default for LrnSpec {
    fn default() -> Self {
        Self {
            local_size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 1.0,
        }
    }
}

impl LrnSpec {
    /// `alpha == 0` is accepted only by the kernels (it reduces the layer to a
    /// constant scale); network architectures require `alpha > 0`.
    pub fn validate(&self, allow_zero_alpha: bool) -> Result<()> {
        if self.local_size == 0 || self.local_size % 2 == 0 {
            return Err(Error::Config(format!(
                "lrn local_size must be odd and >= 1, got {}",
                self.local_size
            )));
        }
        let alpha_ok = if allow_zero_alpha { self.alpha >= 0.0 } else { self.alpha > 0.0 };
        if !alpha_ok || !(self.beta > 0.0) || !(self.k > 0.0) {
            return Err(Error::Config(format!("invalid lrn parameters {self:?}")));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        (self.local_size - 1) / 2
    }
}

#[derive(Debug, Clone, Default)]
pub struct LrnCtx {
    saved: Option<(Tensor, Tensor, Tensor)>, // input, scale, output
}

/// Per-element normalizer `k + alpha/n * window sum of squares`.
fn scales(input: &Tensor, spec: &LrnSpec) -> Tensor {
    let (c, plane) = (input.dims()[0], input.dims()[1] * input.dims()[2]);
    let x = input.data();
    let sq: Vec<f32> = x.iter().map(|v| v * v).collect();
    let coef = spec.alpha / spec.local_size as f32;
    let half = spec.half();
    let mut scale = Tensor::zeros(input.dims());
    let s = scale.data_mut();
    for ch in 0..c {
        let lo = ch.saturating_sub(half);
        let hi = (ch + half).min(c - 1);
        let dst = &mut s[ch * plane..(ch + 1) * plane];
        for j in lo..=hi {
            for (d, &q) in dst.iter_mut().zip(&sq[j * plane..(j + 1) * plane]) {
                *d += q;
            }
        }
        dst.iter_mut().for_each(|d| *d = spec.k + coef * *d);
    }
    scale
}

fn check(input: &Tensor, spec: &LrnSpec) -> Result<()> {
    spec.validate(true)?;
    input.expect_rank("lrn", "input", 3)?;
    Ok(())
}

pub fn lrn_forward(input: &Tensor, spec: &LrnSpec) -> Result<Tensor> {
    check(input, spec)?;
    let scale = scales(input, spec);
    let mut out = input.clone();
    for (o, &s) in out.data_mut().iter_mut().zip(scale.data()) {
        *o *= s.powf(-spec.beta);
    }
    Ok(out)
}

pub fn lrn_forward_cached(input: &Tensor, spec: &LrnSpec, ctx: &mut LrnCtx) -> Result<Tensor> {
    check(input, spec)?;
    let scale = scales(input, spec);
    let mut out = input.clone();
    for (o, &s) in out.data_mut().iter_mut().zip(scale.data()) {
        *o *= s.powf(-spec.beta);
    }
    ctx.saved = Some((input.clone(), scale, out.clone()));
    Ok(out)
}

/// `dx[j] = g[j] s[j]^-b - (2 a b / n) x[j] sum_{c in window(j)} g[c] out[c] / s[c]`.
pub fn lrn_backward(ctx: &LrnCtx, grad_out: &Tensor, spec: &LrnSpec) -> Result<Tensor> {
    let (input, scale, output) = ctx
        .saved
        .as_ref()
        .ok_or_else(|| Error::State("lrn backward called without a forward context".into()))?;
    grad_out.expect_dims("lrn", "upstream gradient", input.dims())?;
    let (c, plane) = (input.dims()[0], input.dims()[1] * input.dims()[2]);
    let g = grad_out.data();
    let t: Vec<f32> = g
        .iter()
        .zip(output.data())
        .zip(scale.data())
        .map(|((&gv, &y), &s)| gv * y / s)
        .collect();
    let coef = 2.0 * spec.alpha * spec.beta / spec.local_size as f32;
    let half = spec.half();
    let mut gx = Tensor::zeros(input.dims());
    let dx = gx.data_mut();
    for ch in 0..c {
        let lo = ch.saturating_sub(half);
        let hi = (ch + half).min(c - 1);
        let range = ch * plane..(ch + 1) * plane;
        let mut acc = vec![0.0f32; plane];
        for j in lo..=hi {
            for (a, &tv) in acc.iter_mut().zip(&t[j * plane..(j + 1) * plane]) {
                *a += tv;
            }
        }
        for (i, idx) in range.enumerate() {
            let x = input.data()[idx];
            dx[idx] = g[idx] * scale.data()[idx].powf(-spec.beta) - coef * x * acc[i];
        }
    }
    Ok(gx)
}
