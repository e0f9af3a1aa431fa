use std::fmt;
use std::str::FromStr;

use crate::data::n_patches;
use crate::error::{MouError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Silu,
    Identity,
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "silu" => Ok(Activation::Silu),
            "identity" => Ok(Activation::Identity),
            _ => Err(format!("expected relu, silu or identity, got `{s}`")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Silu => "silu",
            Activation::Identity => "identity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtractorKind {
    #[default]
    Mof,
    Linear,
    Sem,
    Dyconv,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 4] = [ExtractorKind::Mof, ExtractorKind::Sem, ExtractorKind::Linear, ExtractorKind::Dyconv];
}

impl FromStr for ExtractorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mof" => Ok(ExtractorKind::Mof),
            "linear" => Ok(ExtractorKind::Linear),
            "sem" => Ok(ExtractorKind::Sem),
            "dyconv" => Ok(ExtractorKind::Dyconv),
            _ => Err(format!("expected mof, linear, sem or dyconv, got `{s}`")),
        }
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractorKind::Mof => "mof",
            ExtractorKind::Linear => "linear",
            ExtractorKind::Sem => "sem",
            ExtractorKind::Dyconv => "dyconv",
        })
    }
}

/// Every architectural hyperparameter; parameter shapes follow from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub patch_stride: usize,
    pub d_model: usize,
    pub experts: usize,
    pub top_k: usize,
    pub d_state: usize,
    pub mamba_expand: usize,
    pub d_conv: usize,
    pub ffn_expansion: usize,
    pub activation: Activation,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_padding: usize,
    pub heads: usize,
    /// Layer codes applied in sequence: `M`amba, `F`eed-forward,
    /// `C`onvolution, `A`ttention.
    pub order: String,
    pub extractor: ExtractorKind,
    pub n_blocks: usize,
    pub sem_reduction: usize,
    pub dyconv_kernels: usize,
    pub dyconv_reduction: usize,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lookback: 336,
            horizon: 96,
            patch_len: 16,
            patch_stride: 8,
            d_model: 64,
            experts: 4,
            top_k: 2,
            d_state: 21,
            mamba_expand: 2,
            d_conv: 4,
            ffn_expansion: 2,
            activation: Activation::Relu,
            conv_kernel: 3,
            conv_stride: 1,
            conv_padding: 1,
            heads: 4,
            order: "MFCA".into(),
            extractor: ExtractorKind::Mof,
            n_blocks: 1,
            sem_reduction: 4,
            dyconv_kernels: 4,
            dyconv_reduction: 4,
            norm_eps: 1e-5,
        }
    }
}

/// Keys in the order used for canonical text.
pub const MODEL_KEYS: &[&str] = &[
    "forecast.horizon",
    "forecast.lookback",
    "model.activation",
    "model.conv_kernel",
    "model.conv_padding",
    "model.conv_stride",
    "model.d_conv",
    "model.d_model",
    "model.d_state",
    "model.dyconv_kernels",
    "model.dyconv_reduction",
    "model.experts",
    "model.extractor",
    "model.ffn_expansion",
    "model.heads",
    "model.mamba_expand",
    "model.n_blocks",
    "model.norm_eps",
    "model.order",
    "model.patch_len",
    "model.patch_stride",
    "model.sem_reduction",
    "model.top_k",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| MouError::config(key, format!("`{value}`: {e}")))
}

impl ModelConfig {
    /// Tokens per window.
    pub fn n_tokens(&self) -> usize {
        n_patches(self.lookback, self.patch_len, self.patch_stride).unwrap_or(0)
    }

    pub fn inner_dim(&self) -> usize {
        self.mamba_expand * self.d_model
    }

    /// Sets one field from its `section.key` name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "forecast.lookback" => self.lookback = parse(key, value)?,
            "forecast.horizon" => self.horizon = parse(key, value)?,
            "model.patch_len" => self.patch_len = parse(key, value)?,
            "model.patch_stride" => self.patch_stride = parse(key, value)?,
            "model.d_model" => self.d_model = parse(key, value)?,
            "model.experts" => self.experts = parse(key, value)?,
            "model.top_k" => self.top_k = parse(key, value)?,
            "model.d_state" => self.d_state = parse(key, value)?,
            "model.mamba_expand" => self.mamba_expand = parse(key, value)?,
            "model.d_conv" => self.d_conv = parse(key, value)?,
            "model.ffn_expansion" => self.ffn_expansion = parse(key, value)?,
            "model.activation" => self.activation = parse(key, value)?,
            "model.conv_kernel" => self.conv_kernel = parse(key, value)?,
            "model.conv_stride" => self.conv_stride = parse(key, value)?,
            "model.conv_padding" => self.conv_padding = parse(key, value)?,
            "model.heads" => self.heads = parse(key, value)?,
            "model.order" => self.order = value.trim().to_string(),
            "model.extractor" => self.extractor = parse(key, value)?,
            "model.n_blocks" => self.n_blocks = parse(key, value)?,
            "model.sem_reduction" => self.sem_reduction = parse(key, value)?,
            "model.dyconv_kernels" => self.dyconv_kernels = parse(key, value)?,
            "model.dyconv_reduction" => self.dyconv_reduction = parse(key, value)?,
            "model.norm_eps" => self.norm_eps = parse(key, value)?,
            _ => return Err(MouError::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "forecast.lookback" => self.lookback.to_string(),
            "forecast.horizon" => self.horizon.to_string(),
            "model.patch_len" => self.patch_len.to_string(),
            "model.patch_stride" => self.patch_stride.to_string(),
            "model.d_model" => self.d_model.to_string(),
            "model.experts" => self.experts.to_string(),
            "model.top_k" => self.top_k.to_string(),
            "model.d_state" => self.d_state.to_string(),
            "model.mamba_expand" => self.mamba_expand.to_string(),
            "model.d_conv" => self.d_conv.to_string(),
            "model.ffn_expansion" => self.ffn_expansion.to_string(),
            "model.activation" => self.activation.to_string(),
            "model.conv_kernel" => self.conv_kernel.to_string(),
            "model.conv_stride" => self.conv_stride.to_string(),
            "model.conv_padding" => self.conv_padding.to_string(),
            "model.heads" => self.heads.to_string(),
            "model.order" => self.order.clone(),
            "model.extractor" => self.extractor.to_string(),
            "model.n_blocks" => self.n_blocks.to_string(),
            "model.sem_reduction" => self.sem_reduction.to_string(),
            "model.dyconv_kernels" => self.dyconv_kernels.to_string(),
            "model.dyconv_reduction" => self.dyconv_reduction.to_string(),
            "model.norm_eps" => format!("{:e}", self.norm_eps),
            _ => return None,
        })
    }

    /// Sorted `key = value` lines; identical configs give identical text.
    pub fn canonical_text(&self) -> String {
        MODEL_KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k).expect("known key"))).collect()
    }

    pub fn from_canonical_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| MouError::config(line, "expected key = value"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("forecast.lookback", self.lookback),
            ("forecast.horizon", self.horizon),
            ("model.patch_len", self.patch_len),
            ("model.patch_stride", self.patch_stride),
            ("model.d_model", self.d_model),
            ("model.experts", self.experts),
            ("model.d_state", self.d_state),
            ("model.mamba_expand", self.mamba_expand),
            ("model.d_conv", self.d_conv),
            ("model.ffn_expansion", self.ffn_expansion),
            ("model.conv_kernel", self.conv_kernel),
            ("model.heads", self.heads),
            ("model.n_blocks", self.n_blocks),
            ("model.sem_reduction", self.sem_reduction),
            ("model.dyconv_kernels", self.dyconv_kernels),
            ("model.dyconv_reduction", self.dyconv_reduction),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(MouError::config(*k, "must be at least 1"));
        }
        if self.patch_len > self.lookback {
            return Err(MouError::config(
                "model.patch_len",
                format!("patch length {} exceeds lookback {}", self.patch_len, self.lookback),
            ));
        }
        if self.top_k == 0 || self.top_k > self.experts {
            return Err(MouError::config("model.top_k", format!("must lie in 1..={}", self.experts)));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(MouError::config("model.heads", format!("{} heads do not divide d_model {}", self.heads, self.d_model)));
        }
        if self.conv_stride != 1 {
            return Err(MouError::config("model.conv_stride", "the convolution layer must preserve the token count (stride 1)"));
        }
        if 2 * self.conv_padding + 1 != self.conv_kernel {
            return Err(MouError::config(
                "model.conv_padding",
                format!("padding {} does not preserve the token count for kernel {}", self.conv_padding, self.conv_kernel),
            ));
        }
        if self.order.is_empty() {
            return Err(MouError::config("model.order", "empty layer order"));
        }
        if let Some(bad) = self.order.chars().find(|c| !"MFCA".contains(*c)) {
            return Err(MouError::config("model.order", format!("invalid layer code `{bad}` (use M, F, C, A)")));
        }
        if self.extractor == ExtractorKind::Sem && !self.d_model.is_multiple_of(self.sem_reduction) {
            return Err(MouError::config(
                "model.sem_reduction",
                format!("{} does not divide d_model {}", self.sem_reduction, self.d_model),
            ));
        }
        if !(self.norm_eps > 0.0) {
            return Err(MouError::config("model.norm_eps", "must be positive"));
        }
        Ok(())
    }
}
