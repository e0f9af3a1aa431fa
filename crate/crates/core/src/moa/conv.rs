use mou_autograd::{Conv1dSpec, Result, Scalar, Var};

use super::Pass;
use crate::params::{Norm, ParamBuilder, ParamId};

/// `LayerNorm(x + Conv(x))`, convolving along tokens with full channel
/// mixing (`[D×D×k]` kernel) and a token-count-preserving geometry.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub norm: Norm,
    pub spec: Conv1dSpec,
}

impl ConvLayer {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, d_model: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvLayer {
            kernel: b.uniform("kernel", &[d_model, d_model, kernel], d_model * kernel),
            bias: b.zeros("bias", &[d_model]),
            norm: Norm::new(b, "norm", d_model),
            spec: Conv1dSpec::new(stride, padding),
        }
    }

    /// `x` is token-major `[B×N×D]`.
    pub fn forward<'t, F: Scalar>(&self, pass: &Pass<'_, 't, F>, x: &Var<'t, F>) -> Result<Var<'t, F>> {
        let p = pass.params;
        let y = x.permute(&[0, 2, 1])?.conv1d(p.var(self.kernel), self.spec)?.permute(&[0, 2, 1])?.add(p.var(self.bias))?;
        self.norm.forward(p, &x.add(&y)?, pass.eps)
    }
}
