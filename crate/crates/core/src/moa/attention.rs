use mou_autograd::{Result, Scalar, TensorError, Var};

use super::{FfnLayer, Pass};
use crate::model::Activation;
use crate::params::{Linear, Norm, ParamBuilder};
use crate::trace::{widen, AttentionTrace};

/// Bidirectional multi-head self-attention followed by its own
/// feed-forward sublayer, each wrapped as `LayerNorm(x + f(x))`.
#[derive(Debug, Clone)]
pub struct AttentionLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm: Norm,
    pub ffn: FfnLayer,
    pub heads: usize,
}

impl AttentionLayer {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        d_model: usize,
        heads: usize,
        ffn_expansion: usize,
        activation: Activation,
    ) -> Self {
        AttentionLayer {
            query: Linear::new(b, "query", d_model, d_model, true),
            key: Linear::new(b, "key", d_model, d_model, true),
            value: Linear::new(b, "value", d_model, d_model, true),
            output: Linear::new(b, "output", d_model, d_model, true),
            norm: Norm::new(b, "norm", d_model),
            ffn: FfnLayer::new(&mut b.scoped("ffn"), d_model, ffn_expansion, activation),
            heads,
        }
    }

    /// `LayerNorm(x + MHSA(x))` on `[B×N×D]`.
    pub fn attention_sublayer<'t, F: Scalar>(
        &self,
        pass: &Pass<'_, 't, F>,
        x: &Var<'t, F>,
        layer: usize,
    ) -> Result<Var<'t, F>> {
        let p = pass.params;
        let s = x.shape().to_vec();
        if s.len() != 3 || !s[2].is_multiple_of(self.heads) {
            return Err(TensorError::dim("attention", format!("input {s:?} with {} heads", self.heads)));
        }
        let (b, n, d) = (s[0], s[1], s[2]);
        let dk = d / self.heads;
        let split = |v: Var<'t, F>| v.reshape(&[b, n, self.heads, dk])?.permute(&[0, 2, 1, 3]);
        let q = split(self.query.forward(p, x)?)?;
        let k = split(self.key.forward(p, x)?)?;
        let v = split(self.value.forward(p, x)?)?;
        let weights = q.bmm(&k, true)?.scale(F::lit(1.0 / (dk as f64).sqrt()))?.softmax()?;
        if let Some(trace) = pass.trace {
            trace.borrow_mut().attention.push(AttentionTrace { layer, weights: widen(weights.value()) });
        }
        let ctx = weights.bmm(&v, false)?.permute(&[0, 2, 1, 3])?.reshape(&[b, n, d])?;
        let y = self.output.forward(p, &ctx)?;
        self.norm.forward(p, &x.add(&y)?, pass.eps)
    }

    pub fn forward<'t, F: Scalar>(&self, pass: &Pass<'_, 't, F>, x: &Var<'t, F>, layer: usize) -> Result<Var<'t, F>> {
        let h = self.attention_sublayer(pass, x, layer)?;
        self.ffn.forward(pass, &h)
    }
}
