use mou_autograd::{Result, Scalar, Tape, Tensor, Var};

use super::ssm::{attention_matrix, selective_scan};
use super::Pass;
use crate::params::{Bound, Linear, Norm, ParamBuilder, ParamId, ParamStore};
use crate::trace::{widen, SsmTrace};

/// Gated selective state-space layer:
/// `x' = SiLU(CausalConv(x·W_in))`, `z = SiLU(x·W_z)`,
/// `y = LayerNorm(x + (SSM(x') ⊙ z)·W_out)`.
#[derive(Debug, Clone)]
pub struct MambaLayer {
    pub in_proj: Linear,
    pub gate_proj: Linear,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub b_proj: Linear,
    pub c_proj: Linear,
    pub dt_proj: Linear,
    /// `A = −exp(log_a)`, `[E×S]`.
    pub log_a: ParamId,
    pub out_proj: Linear,
    pub norm: Norm,
}

/// `log(eʸ − 1)`, the inverse of softplus.
fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl MambaLayer {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, d_model: usize, inner: usize, d_state: usize, d_conv: usize) -> Self {
        let in_proj = Linear::new(b, "in_proj", d_model, inner, true);
        let gate_proj = Linear::new(b, "gate_proj", d_model, inner, true);
        let conv_kernel = b.uniform("conv_kernel", &[inner, d_conv], d_conv);
        let conv_bias = b.zeros("conv_bias", &[inner]);
        let b_proj = Linear::new(b, "b_proj", inner, d_state, false);
        let c_proj = Linear::new(b, "c_proj", inner, d_state, false);
        let dt_proj = {
            let mut s = b.scoped("dt_proj");
            let weight = s.uniform("weight", &[inner, inner], inner);
            // Initial step sizes log-uniform in [1e-3, 1e-1].
            let bias = s.with_rng("bias", &[inner], |_, rng| {
                use rand::Rng;
                let u: f64 = rng.random_range(0.0..1.0);
                let dt = (1e-3f64.ln() + u * (1e-1f64.ln() - 1e-3f64.ln())).exp();
                inverse_softplus(dt)
            });
            Linear { weight, bias: Some(bias) }
        };
        let log_a = b.with_rng("log_a", &[inner, d_state], |i, _| ((i % d_state) as f64 + 1.0).ln());
        MambaLayer {
            in_proj,
            gate_proj,
            conv_kernel,
            conv_bias,
            b_proj,
            c_proj,
            dt_proj,
            log_a,
            out_proj: Linear::new(b, "out_proj", inner, d_model, true),
            norm: Norm::new(b, "norm", d_model),
        }
    }

    /// `x' = SiLU(CausalDepthwiseConv(x·W_in))`.
    pub fn scan_input<'t, F: Scalar>(&self, p: &Bound<'t, F>, x: &Var<'t, F>) -> Result<Var<'t, F>> {
        self.in_proj.forward(p, x)?.causal_depthwise_conv1d(p.var(self.conv_kernel))?.add(p.var(self.conv_bias))?.silu()
    }

    /// Input-dependent `(Δ, A, B, C)` for the scan.
    pub fn ssm_inputs<'t, F: Scalar>(
        &self,
        p: &Bound<'t, F>,
        xs: &Var<'t, F>,
    ) -> Result<(Var<'t, F>, Var<'t, F>, Var<'t, F>, Var<'t, F>)> {
        let delta = self.dt_proj.forward(p, xs)?.softplus()?;
        let a = p.var(self.log_a).exp()?.neg()?;
        Ok((delta, a, self.b_proj.forward(p, xs)?, self.c_proj.forward(p, xs)?))
    }

    /// The selective scan applied to `x'` (`[..×N×E]`).
    pub fn ssm<'t, F: Scalar>(&self, p: &Bound<'t, F>, xs: &Var<'t, F>) -> Result<Var<'t, F>> {
        let (delta, a, b, c) = self.ssm_inputs(p, xs)?;
        selective_scan(xs, &delta, &a, &b, &c)
    }

    pub fn forward<'t, F: Scalar>(&self, pass: &Pass<'_, 't, F>, x: &Var<'t, F>, layer: usize) -> Result<Var<'t, F>> {
        let p = pass.params;
        let xs = self.scan_input(p, x)?;
        let z = self.gate_proj.forward(p, x)?.silu()?;
        let (delta, a, b, c) = self.ssm_inputs(p, &xs)?;
        let y = selective_scan(&xs, &delta, &a, &b, &c)?;
        if let Some(trace) = pass.trace {
            trace.borrow_mut().ssm.push(SsmTrace {
                layer,
                x: widen(xs.value()),
                delta: widen(delta.value()),
                a: widen(a.value()),
                b: widen(b.value()),
                c: widen(c.value()),
                y: widen(y.value()),
            });
        }
        let out = self.out_proj.forward(p, &y.mul(&z)?)?;
        self.norm.forward(p, &out.add(x)?, pass.eps)
    }

    /// Causal token-mixing matrix `[N×N]` of one inner channel for a single
    /// sequence `x'` (`[N×E]`).
    pub fn ssm_attention_matrix<F: Scalar>(&self, params: &ParamStore<F>, xs: &Tensor<F>, channel: usize) -> Result<Tensor<F>> {
        let tape = Tape::inference();
        let p = params.bind(&tape, false);
        let (delta, a, b, c) = self.ssm_inputs(&p, &tape.constant(xs.clone()))?;
        attention_matrix(delta.value(), a.value(), b.value(), c.value(), channel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_softplus_round_trip() {
        for y in [1e-3, 0.05, 0.1, 2.0] {
            assert!((mou_autograd::ops::softplus(inverse_softplus(y)) - y).abs() < 1e-12);
        }
    }
}
