use crate::error::Result;
use crate::tensor::Tensor;

/// Accumulated gradient and momentum state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl GradBuffer {
    pub fn for_param(param: &Tensor) -> Self {
        Self {
            grad: Tensor::zeros(param.dims()),
            velocity: Tensor::zeros(param.dims()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Momentum SGD: `v <- momentum * v + g; p <- p - lr * v`.
/// A frozen tensor, and its momentum state, is left untouched.
pub fn sgd_step(param: &mut Tensor, buf: &mut GradBuffer, lr: f32, momentum: f32, frozen: bool) -> Result<()> {
    buf.grad.expect_dims("sgd", "gradient", param.dims())?;
    buf.velocity.expect_dims("sgd", "velocity", param.dims())?;
    if frozen {
        return Ok(());
    }
    for ((p, v), &g) in param
        .data_mut()
        .iter_mut()
        .zip(buf.velocity.data_mut())
        .zip(buf.grad.data())
    {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}
