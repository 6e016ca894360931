use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clamp inside the log of the cross-entropy loss.
pub const LOG_EPS: f32 = 1e-12;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
    out
}

pub fn relu_forward_inplace(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Gradient of ReLU given its forward output: passes `grad` where the output is positive.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_dims("relu", "upstream gradient", output.dims())?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

pub fn softmax(input: &Tensor) -> Result<Tensor> {
    if input.is_empty() {
        return Err(Error::Input("softmax of an empty tensor".into()));
    }
    let max = input.data().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out = input.clone();
    let mut sum = 0.0f32;
    for v in out.data_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    out.data_mut().iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Softmax cross-entropy: returns `-ln(p[label] + eps)` and the gradient with
/// respect to the logits, `p - onehot(label)`.
pub fn cross_entropy_loss(probs: &Tensor, label: usize) -> Result<(f32, Tensor)> {
    if label >= probs.len() {
        return Err(Error::Input(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let loss = -(probs.data()[label] + LOG_EPS).ln();
    let mut grad = probs.clone();
    grad.data_mut()[label] -= 1.0;
    Ok((loss, grad))
}
