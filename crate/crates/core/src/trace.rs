//! Intermediate quantities captured during a forward pass for inspection.

use mou_autograd::{Scalar, Tensor};

use crate::mof::RouterDecision;

/// Softmax weights of one attention layer, `[B×heads×N×N]`.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub layer: usize,
    pub weights: Tensor<f64>,
}

/// Inputs of one selective scan.
#[derive(Debug, Clone)]
pub struct SsmTrace {
    pub layer: usize,
    /// Scan input `x'`, `[B×N×E]`.
    pub x: Tensor<f64>,
    /// Step sizes, `[B×N×E]`.
    pub delta: Tensor<f64>,
    /// State matrix diagonal, `[E×S]`.
    pub a: Tensor<f64>,
    /// `[B×N×S]`.
    pub b: Tensor<f64>,
    /// `[B×N×S]`.
    pub c: Tensor<f64>,
    /// Scan output, `[B×N×E]`.
    pub y: Tensor<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// One decision per token, batch-major.
    pub router: Vec<RouterDecision<f64>>,
    pub attention: Vec<AttentionTrace>,
    pub ssm: Vec<SsmTrace>,
}

pub(crate) fn widen<F: Scalar>(t: &Tensor<F>) -> Tensor<f64> {
    t.cast()
}

pub(crate) fn widen_decision<F: Scalar>(d: &RouterDecision<F>) -> RouterDecision<f64> {
    RouterDecision {
        indices: d.indices.clone(),
        weights: d.weights.iter().map(|w| w.as_f64()).collect(),
        scores: d.scores.iter().map(|w| w.as_f64()).collect(),
    }
}
