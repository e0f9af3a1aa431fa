//! Token-mixing layers and their composition by order string.

mod attention;
mod conv;
mod ffn;
mod mamba;
pub mod ssm;
mod stack;

use std::cell::RefCell;

use mou_autograd::Scalar;

use crate::params::Bound;
use crate::trace::Trace;

pub use attention::AttentionLayer;
pub use conv::ConvLayer;
pub use ffn::FfnLayer;
pub use mamba::MambaLayer;
pub use stack::{Layer, LayerCode, LayerStack};

/// What every layer needs besides its input.
pub struct Pass<'a, 't, F: Scalar> {
    pub params: &'a Bound<'t, F>,
    pub eps: f64,
    pub trace: Option<&'a RefCell<Trace>>,
}

impl<'a, 't, F: Scalar> Pass<'a, 't, F> {
    pub fn new(params: &'a Bound<'t, F>, eps: f64) -> Self {
        Pass { params, eps, trace: None }
    }

    pub fn traced(mut self, trace: &'a RefCell<Trace>) -> Self {
        self.trace = Some(trace);
        self
    }
}
