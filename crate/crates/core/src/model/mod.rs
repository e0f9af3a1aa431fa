//! End-to-end forecaster: patching, patch embedding, layer stack, linear
//! head.

mod checkpoint;
mod config;
mod flops;

use std::cell::RefCell;
use std::collections::BTreeMap;

use mou_autograd::{Scalar, Tape, Tensor, TensorError, Var};

use crate::error::{MouError, Result};
use crate::moa::{LayerStack, Pass};
use crate::mof::{DyconvExtractor, Extractor, MofExtractor, SemExtractor};
use crate::params::{Bound, Linear, ParamBuilder, ParamStore};
use crate::trace::{widen_decision, Trace};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Activation, ExtractorKind, ModelConfig, MODEL_KEYS};
pub use flops::{count_flops, FlopReport, SymbolicTerm, FLOP_TERMS};

/// Parameter-name prefixes of the three model parts.
pub const EXTRACTOR_PREFIX: &str = "extractor";
pub const STACK_PREFIX: &str = "stack";
pub const HEAD_PREFIX: &str = "head";

#[derive(Debug, Clone)]
pub struct MoUModel<F: Scalar> {
    config: ModelConfig,
    params: ParamStore<F>,
    extractor: Extractor,
    stack: LayerStack,
    head: Linear,
}

impl<F: Scalar> MoUModel<F> {
    /// Builds a model with parameters initialised from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut b = ParamBuilder::new(&mut params, seed);
        let (p, d) = (config.patch_len, config.d_model);
        let extractor = {
            let mut s = b.scoped(EXTRACTOR_PREFIX);
            match config.extractor {
                ExtractorKind::Mof => Extractor::Mof(MofExtractor::new(&mut s, p, d, config.experts, config.top_k)),
                ExtractorKind::Linear => Extractor::Linear(Linear::new(&mut s, "linear", p, d, true)),
                ExtractorKind::Sem => Extractor::Sem(SemExtractor::new(&mut s, p, d, config.sem_reduction)),
                ExtractorKind::Dyconv => Extractor::Dyconv(DyconvExtractor::new(
                    &mut s,
                    p,
                    d,
                    config.dyconv_kernels,
                    config.dyconv_reduction,
                )),
            }
        };
        let stack = LayerStack::build(&mut b.scoped(STACK_PREFIX), &config.order, &config)?;
        let fan_in = config.n_tokens() * d;
        let head = Linear::new(&mut b, HEAD_PREFIX, fan_in, config.horizon, true);
        Ok(MoUModel { config, params, extractor, stack, head })
    }

    /// Rebuilds the structure for `config` and adopts `params`, which must
    /// match it name for name and shape for shape.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if model.params.len() != params.len() {
            return Err(MouError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((name, want), (got_name, got)) in model.params.iter().zip(params.iter()) {
            if name != got_name || want.shape() != got.shape() {
                return Err(MouError::Checkpoint(format!(
                    "array `{got_name}` {:?} does not match `{name}` {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn stack(&self) -> &LayerStack {
        &self.stack
    }

    pub fn extractor(&self) -> &Extractor {
        &self.extractor
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// Same model in another precision.
    pub fn cast<G: Scalar>(&self) -> MoUModel<G> {
        MoUModel {
            config: self.config.clone(),
            params: self.params.cast(),
            extractor: self.extractor.clone(),
            stack: self.stack.clone(),
            head: self.head,
        }
    }

    /// Shape of the router noise a training pass over `batch` windows
    /// consumes, if the extractor is noisy.
    pub fn noise_shape(&self, batch: usize) -> Option<[usize; 2]> {
        self.extractor.noise_width().map(|c| [batch * self.config.n_tokens(), c])
    }

    /// `[B×L]` windows to `[B×N×P]` patches.
    pub fn patchify<'t>(&self, x: &Var<'t, F>) -> mou_autograd::Result<Var<'t, F>> {
        let s = x.shape();
        let l = self.config.lookback;
        if s.len() != 2 || s[1] != l {
            return Err(TensorError::dim("forward", format!("expected [B×{l}] windows, got {s:?}")));
        }
        let b = s[0];
        let (n, p, stride) = (self.config.n_tokens(), self.config.patch_len, self.config.patch_stride);
        let mut idx = Vec::with_capacity(b * n * p);
        for bi in 0..b {
            for t in 0..n {
                idx.extend((0..p).map(|j| bi * l + t * stride + j));
            }
        }
        x.gather(idx, &[b, n, p])
    }

    /// Differentiable forward of `[B×L]` windows to `[B×T]` forecasts.
    ///
    /// `noise` switches the router to training mode.
    pub fn forward_var<'t>(
        &self,
        pass: &Pass<'_, 't, F>,
        x: &Var<'t, F>,
        noise: Option<&Tensor<F>>,
    ) -> mou_autograd::Result<Var<'t, F>> {
        let tape = x.tape();
        let patches = self.patchify(x)?;
        let (b, n) = (patches.shape()[0], patches.shape()[1]);
        let (tokens, decisions) = tape.with_scope("MoF", || self.extractor.forward(pass.params, &patches, noise))?;
        if let Some(trace) = pass.trace {
            trace.borrow_mut().router.extend(decisions.iter().map(widen_decision));
        }
        let h = self.stack.forward(pass, &tokens)?;
        let flat = h.reshape(&[b, n * self.config.d_model])?;
        tape.with_scope("Head", || self.head.forward(pass.params, &flat))
    }

    fn run(&self, x: &Tensor<F>, trace: Option<&RefCell<Trace>>) -> Result<Tensor<F>> {
        let tape = Tape::inference();
        let params: Bound<'_, F> = self.params.bind(&tape, false);
        let mut pass = Pass::new(&params, self.config.norm_eps);
        pass.trace = trace;
        let y = self.forward_var(&pass, &tape.constant(x.clone()), None)?;
        Ok(y.value().clone())
    }

    /// Evaluation-mode forecasts for `[B×L]` windows.
    pub fn predict(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.run(x, None)
    }

    /// [`Self::predict`] that also returns router decisions, attention
    /// weights and scan inputs.
    pub fn predict_traced(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Trace)> {
        let trace = RefCell::new(Trace::default());
        let y = self.run(x, Some(&trace))?;
        Ok((y, trace.into_inner()))
    }

    /// Forecast of one univariate window of length `L`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if x.shape() != [self.config.lookback] {
            return Err(TensorError::dim("forward", format!("expected [{}], got {:?}", self.config.lookback, x.shape())).into());
        }
        let y = self.predict(&x.clone().reshape(vec![1, self.config.lookback])?)?;
        Ok(y.reshape(vec![self.config.horizon])?)
    }

    /// Forecasts each row of `[M×L]` independently with shared weights.
    pub fn forward_multivariate(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if x.ndim() != 2 {
            return Err(TensorError::dim("forward_multivariate", format!("expected [M×L], got {:?}", x.shape())).into());
        }
        self.predict(x)
    }

    /// Multiply-accumulates per scope, counted on an actual evaluation-mode
    /// forward of a single window.
    pub fn measured_macs(&self) -> Result<BTreeMap<&'static str, u64>> {
        let tape = Tape::inference();
        let params = self.params.bind(&tape, false);
        let pass = Pass::new(&params, self.config.norm_eps);
        let x = tape.constant(Tensor::zeros(vec![1, self.config.lookback]));
        self.forward_var(&pass, &x, None)?;
        Ok(tape.mac_counts())
    }
}
