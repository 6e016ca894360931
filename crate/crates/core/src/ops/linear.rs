use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `out[o] = bias[o] + sum_d w[o, d] * x[d]` over the first `x.len()` columns of a
/// row-major matrix with `row_stride` columns, summed in ascending `d`.
///
/// Using a prefix of the columns is how a pruned model skips the blocks that
/// belong to inactive groups.
pub(crate) fn linear_prefix(x: &[f32], weights: &[f32], row_stride: usize, bias: &[f32]) -> Vec<f32> {
    debug_assert!(x.len() <= row_stride);
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * row_stride..o * row_stride + x.len()];
            let mut acc = b;
            for (&w, &v) in row.iter().zip(x) {
                acc += w * v;
            }
            acc
        })
        .collect()
}

pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    input.expect_rank("fc", "input", 1)?;
    weights.expect_rank("fc", "weights", 2)?;
    let (o, d) = (weights.dims()[0], weights.dims()[1]);
    if input.len() != d {
        return Err(Error::dim("fc", format!("input length {} but weights have {d} columns", input.len())));
    }
    bias.expect_dims("fc", "bias", &[o])?;
    Tensor::from_vec(&[o], linear_prefix(input.data(), weights.data(), d, bias.data()))
}

#[derive(Debug, Clone)]
pub struct FcGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Gradients of the fully connected layer. The forward input is the context.
pub fn fc_backward(input: Option<&Tensor>, weights: &Tensor, grad_out: &Tensor) -> Result<FcGrads> {
    let input = input.ok_or_else(|| Error::State("fc backward called without a forward context".into()))?;
    let (o, d) = (weights.dims()[0], weights.dims()[1]);
    input.expect_dims("fc", "input", &[d])?;
    grad_out.expect_dims("fc", "upstream gradient", &[o])?;
    let mut gw = Tensor::zeros(weights.dims());
    let mut gx = Tensor::zeros(&[d]);
    for (r, &g) in grad_out.data().iter().enumerate() {
        let wrow = &weights.data()[r * d..(r + 1) * d];
        for (dst, &xv) in gw.data_mut()[r * d..(r + 1) * d].iter_mut().zip(input.data()) {
            *dst = g * xv;
        }
        for (dst, &w) in gx.data_mut().iter_mut().zip(wrow) {
            *dst += w * g;
        }
    }
    Ok(FcGrads {
        input: gx,
        weights: gw,
        bias: grad_out.clone(),
    })
}
