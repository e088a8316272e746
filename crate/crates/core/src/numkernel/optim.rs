use super::{KernelError, Tensor};

/// A trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum_buf: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum_buf = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            momentum_buf,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0005,
        }
    }
}

/// SGD with classic momentum and coupled weight decay:
///
/// ```text
/// buf   ← momentum·buf + (grad + weight_decay·value)
/// value ← value − lr·buf
/// ```
///
/// Gradients are zeroed afterwards. All gradients are validated before any
/// parameter is touched, so a fault leaves every parameter unchanged.
pub fn sgd_step(params: &mut [Parameter], lr: f64, cfg: SgdConfig) -> Result<(), KernelError> {
    if let Some(bad) = params.iter().find(|p| !p.grad.is_finite()) {
        return Err(KernelError::NumericFault(format!(
            "non-finite gradient in parameter '{}'",
            bad.name
        )));
    }
    for p in params.iter_mut() {
        let value = p.value.data_mut();
        let buf = p.momentum_buf.data_mut();
        for ((v, b), g) in value.iter_mut().zip(buf.iter_mut()).zip(p.grad.data()) {
            *b = cfg.momentum * *b + (g + cfg.weight_decay * *v);
            *v -= lr * *b;
        }
        p.zero_grad();
    }
    Ok(())
}
