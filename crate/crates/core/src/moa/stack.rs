use std::fmt;

use mou_autograd::{Result, Scalar, Var};

use super::{AttentionLayer, ConvLayer, FfnLayer, MambaLayer, Pass};
use crate::error::MouError;
use crate::model::ModelConfig;
use crate::params::ParamBuilder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerCode {
    Mamba,
    FeedForward,
    Conv,
    Attention,
}

impl LayerCode {
    pub fn parse(c: char) -> Option<Self> {
        match c {
            'M' => Some(LayerCode::Mamba),
            'F' => Some(LayerCode::FeedForward),
            'C' => Some(LayerCode::Conv),
            'A' => Some(LayerCode::Attention),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            LayerCode::Mamba => 'M',
            LayerCode::FeedForward => 'F',
            LayerCode::Conv => 'C',
            LayerCode::Attention => 'A',
        }
    }

    /// Scope name under which the layer's multiply-accumulates are counted.
    pub fn scope(self) -> &'static str {
        match self {
            LayerCode::Mamba => "Mamba",
            LayerCode::FeedForward => "FFN",
            LayerCode::Conv => "Conv",
            LayerCode::Attention => "Attention",
        }
    }
}

impl fmt::Display for LayerCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Mamba(MambaLayer),
    FeedForward(FfnLayer),
    Conv(ConvLayer),
    Attention(AttentionLayer),
}

impl Layer {
    pub fn code(&self) -> LayerCode {
        match self {
            Layer::Mamba(_) => LayerCode::Mamba,
            Layer::FeedForward(_) => LayerCode::FeedForward,
            Layer::Conv(_) => LayerCode::Conv,
            Layer::Attention(_) => LayerCode::Attention,
        }
    }

    pub fn forward<'t, F: Scalar>(&self, pass: &Pass<'_, 't, F>, x: &Var<'t, F>, index: usize) -> Result<Var<'t, F>> {
        match self {
            Layer::Mamba(l) => l.forward(pass, x, index),
            Layer::FeedForward(l) => l.forward(pass, x),
            Layer::Conv(l) => l.forward(pass, x),
            Layer::Attention(l) => l.forward(pass, x, index),
        }
    }
}

/// Layers applied in order; every layer maps `[B×N×D]` to `[B×N×D]`.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
}

impl LayerStack {
    /// Builds `config.n_blocks` repetitions of `order`, each with its own
    /// parameters.
    pub fn build<F: Scalar>(b: &mut ParamBuilder<'_, F>, order: &str, config: &ModelConfig) -> crate::Result<Self> {
        let codes: Vec<LayerCode> = order
            .chars()
            .map(|c| LayerCode::parse(c).ok_or_else(|| MouError::config("model.order", format!("invalid layer code `{c}`"))))
            .collect::<crate::Result<_>>()?;
        if codes.is_empty() {
            return Err(MouError::config("model.order", "empty layer order"));
        }
        let d = config.d_model;
        let mut layers = Vec::new();
        for block in 0..config.n_blocks.max(1) {
            for (i, code) in codes.iter().enumerate() {
                let mut s = b.scoped(&format!("block{block}.{i}{}", code.letter()));
                layers.push(match code {
                    LayerCode::Mamba => {
                        Layer::Mamba(MambaLayer::new(&mut s, d, config.inner_dim(), config.d_state, config.d_conv))
                    }
                    LayerCode::FeedForward => {
                        Layer::FeedForward(FfnLayer::new(&mut s, d, config.ffn_expansion, config.activation))
                    }
                    LayerCode::Conv => Layer::Conv(ConvLayer::new(
                        &mut s,
                        d,
                        config.conv_kernel,
                        config.conv_stride,
                        config.conv_padding,
                    )),
                    LayerCode::Attention => Layer::Attention(AttentionLayer::new(
                        &mut s,
                        d,
                        config.heads,
                        config.ffn_expansion,
                        config.activation,
                    )),
                });
            }
        }
        Ok(LayerStack { layers })
    }

    pub fn codes(&self) -> String {
        self.layers.iter().map(|l| l.code().letter()).collect()
    }

    pub fn forward<'t, F: Scalar>(&self, pass: &Pass<'_, 't, F>, x: &Var<'t, F>) -> Result<Var<'t, F>> {
        let tape = x.tape();
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = tape.with_scope(layer.code().scope(), || layer.forward(pass, &h, i))?;
        }
        Ok(h)
    }
}
