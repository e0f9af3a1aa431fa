use std::collections::BTreeMap;
use std::fmt::Write;

use super::{ExtractorKind, ModelConfig};
use crate::moa::LayerCode;

/// Report keys, in display order.
pub const FLOP_TERMS: [&str; 6] = ["MoF", "Mamba", "FFN", "Conv", "Attention", "Head"];

/// `coefficient · N^n_power · D^d_power`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicTerm {
    pub term: &'static str,
    pub coefficient: f64,
    pub n_power: u32,
    pub d_power: u32,
}

impl SymbolicTerm {
    pub fn value(&self, n: usize, d: usize) -> f64 {
        self.coefficient * (n as f64).powi(self.n_power as i32) * (d as f64).powi(self.d_power as i32)
    }
}

/// Cost of one forward pass over a single window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopReport {
    pub tokens: usize,
    pub d_model: usize,
    /// Exact multiply-accumulates per term for the configured shapes.
    pub exact: BTreeMap<&'static str, u64>,
    /// Leading-order terms of the block cost, per layer.
    pub symbolic: Vec<SymbolicTerm>,
}

impl FlopReport {
    pub fn exact_total(&self) -> u64 {
        self.exact.values().sum()
    }

    /// Leading-order cost of the extractor and stack.
    pub fn symbolic_total(&self) -> f64 {
        self.symbolic.iter().map(|t| t.value(self.tokens, self.d_model)).sum()
    }

    /// Leading-order cost summed per term.
    pub fn symbolic_by_term(&self) -> BTreeMap<&'static str, f64> {
        let mut out = BTreeMap::new();
        for t in &self.symbolic {
            *out.entry(t.term).or_insert(0.0) += t.value(self.tokens, self.d_model);
        }
        out
    }

    /// Three standard self-attention layers: `3(N²D + ND²)`.
    pub fn mhsa_comparator(&self) -> f64 {
        let (n, d) = (self.tokens as f64, self.d_model as f64);
        3.0 * (n * n * d + n * d * d)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tokens N = {}, width D = {}", self.tokens, self.d_model);
        let _ = writeln!(s, "{:<10} {:>16} {:>16}", "term", "exact MACs", "leading order");
        let sym = self.symbolic_by_term();
        for term in FLOP_TERMS {
            let exact = self.exact.get(term).copied().unwrap_or(0);
            let lead = sym.get(term).map_or("-".to_string(), |v| format!("{v:.0}"));
            let _ = writeln!(s, "{term:<10} {exact:>16} {lead:>16}");
        }
        let formula: Vec<String> = self
            .symbolic
            .iter()
            .map(|t| {
                let n = match t.n_power {
                    1 => "N".to_string(),
                    p => format!("N^{p}"),
                };
                let d = match t.d_power {
                    1 => "D".to_string(),
                    p => format!("D^{p}"),
                };
                format!("{}·{n}{d} [{}]", t.coefficient, t.term)
            })
            .collect();
        let _ = writeln!(s, "C_MoU  = {}", formula.join(" + "));
        let _ = writeln!(s, "C_MoU  = {:.0} (leading order), {} (exact incl. head)", self.symbolic_total(), self.exact_total());
        let _ = writeln!(s, "C_MHSA = 3(N^2D + ND^2) = {:.0}", self.mhsa_comparator());
        s
    }
}

fn term(term: &'static str, coefficient: f64, n_power: u32, d_power: u32) -> SymbolicTerm {
    SymbolicTerm { term, coefficient, n_power, d_power }
}

/// Cost accounting for `config`, matching what the forward pass executes.
pub fn count_flops(config: &ModelConfig) -> FlopReport {
    let n = config.n_tokens() as u64;
    let d = config.d_model as u64;
    let p = config.patch_len as u64;
    let e = config.inner_dim() as u64;
    let s = config.d_state as u64;
    let hidden = d * config.ffn_expansion as u64;
    let mut exact: BTreeMap<&'static str, u64> = FLOP_TERMS.iter().map(|&t| (t, 0)).collect();
    let mut symbolic = Vec::new();

    let (mof, lead) = match config.extractor {
        ExtractorKind::Mof => {
            let c = config.experts as u64;
            let k = config.top_k as u64;
            (n * p * c + k * n * p * d, config.top_k as f64)
        }
        ExtractorKind::Linear => (n * p * d, 1.0),
        ExtractorKind::Sem => {
            let h = d / config.sem_reduction as u64;
            (n * p * d + 2 * d * h, 1.0)
        }
        ExtractorKind::Dyconv => {
            let h = (d / config.dyconv_reduction as u64).max(1);
            let kn = config.dyconv_kernels as u64;
            (p * h + h * kn + kn * d * p + kn * d + n * p * d, 1.0)
        }
    };
    exact.insert("MoF", mof);
    symbolic.push(term("MoF", lead, 1, 2));

    for _ in 0..config.n_blocks.max(1) {
        for code in config.order.chars().filter_map(LayerCode::parse) {
            let (macs, lead) = match code {
                LayerCode::Mamba => {
                    let c = n * (2 * d * e + e * config.d_conv as u64 + e * e + 2 * e * s + 3 * e * s + e * d);
                    (c, vec![term("Mamba", 1.0, 1, 2)])
                }
                LayerCode::FeedForward => (2 * n * d * hidden, vec![term("FFN", 1.0, 1, 2)]),
                LayerCode::Conv => {
                    let k = config.conv_kernel as u64;
                    (n * d * d * k, vec![term("Conv", config.conv_kernel as f64, 1, 2)])
                }
                LayerCode::Attention => (
                    4 * n * d * d + 2 * n * n * d + 2 * n * d * hidden,
                    vec![term("Attention", 1.0, 2, 1), term("Attention", 1.0, 1, 2)],
                ),
            };
            *exact.get_mut(code.scope()).expect("known term") += macs;
            symbolic.extend(lead);
        }
    }
    exact.insert("Head", n * d * config.horizon as u64);
    FlopReport { tokens: n as usize, d_model: d as usize, exact, symbolic }
}
