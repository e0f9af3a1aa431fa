use mou_autograd::{Result, Scalar, Var};

use super::Pass;
use crate::model::Activation;
use crate::params::{Linear, Norm, ParamBuilder};

/// `LayerNorm(x + W₂·act(W₁·x))`.
#[derive(Debug, Clone)]
pub struct FfnLayer {
    pub up: Linear,
    pub down: Linear,
    pub norm: Norm,
    pub activation: Activation,
}

impl FfnLayer {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, d_model: usize, expansion: usize, activation: Activation) -> Self {
        let hidden = d_model * expansion;
        FfnLayer {
            up: Linear::new(b, "up", d_model, hidden, true),
            down: Linear::new(b, "down", hidden, d_model, true),
            norm: Norm::new(b, "norm", d_model),
            activation,
        }
    }

    pub fn forward<'t, F: Scalar>(&self, pass: &Pass<'_, 't, F>, x: &Var<'t, F>) -> Result<Var<'t, F>> {
        let p = pass.params;
        let h = self.up.forward(p, x)?;
        let h = match self.activation {
            Activation::Relu => h.relu()?,
            Activation::Silu => h.silu()?,
            Activation::Identity => h,
        };
        let y = self.down.forward(p, &h)?;
        self.norm.forward(p, &x.add(&y)?, pass.eps)
    }
}
