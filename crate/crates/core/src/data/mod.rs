//! Series loading, chronological splits, standardisation, windowing and
//! patching.

mod csv_io;
pub mod synthetic;
mod window;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{MouError, Result};

pub use csv_io::load_csv;
pub use window::{make_windows, prepare, ForecastBatch, PreparedData, WindowSet};

/// Variables of one dataset, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    names: Vec<String>,
    timestamps: Vec<String>,
    values: Vec<Vec<f64>>,
    target: String,
}

impl SeriesTable {
    pub fn new(names: Vec<String>, timestamps: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() || names.len() != values.len() {
            return Err(MouError::config("dataset", format!("{} names for {} columns", names.len(), values.len())));
        }
        let len = timestamps.len();
        if let Some((name, col)) = names.iter().zip(&values).find(|(_, c)| c.len() != len) {
            return Err(MouError::config("dataset", format!("column `{name}` has {} rows, expected {len}", col.len())));
        }
        let target = if names.iter().any(|n| n == "OT") { "OT".to_string() } else { names[names.len() - 1].clone() };
        Ok(SeriesTable { names, timestamps, values, target })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn n_variables(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn with_target(mut self, target: &str) -> Result<Self> {
        if !self.names.iter().any(|n| n == target) {
            return Err(MouError::config("dataset.target", format!("no column named `{target}` (have {:?})", self.names)));
        }
        self.target = target.to_string();
        Ok(self)
    }

    /// The table restricted to the target column.
    pub fn univariate(&self) -> SeriesTable {
        let i = self.names.iter().position(|n| *n == self.target).expect("target validated");
        SeriesTable {
            names: vec![self.target.clone()],
            timestamps: self.timestamps.clone(),
            values: vec![self.values[i].clone()],
            target: self.target.clone(),
        }
    }
}

/// Which variables become samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Features {
    /// Every variable, each treated as an independent channel.
    #[default]
    Multivariate,
    /// Only the target variable.
    Univariate,
}

impl FromStr for Features {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "M" => Ok(Features::Multivariate),
            "S" => Ok(Features::Univariate),
            _ => Err(format!("expected M or S, got `{s}`")),
        }
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Features::Multivariate => "M",
            Features::Univariate => "S",
        })
    }
}

/// Train/validation/test proportions written as integer parts, e.g. `6:2:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    parts: [u32; 3],
}

impl SplitSpec {
    pub fn new(train: u32, val: u32, test: u32) -> std::result::Result<Self, String> {
        if train == 0 || val == 0 || test == 0 {
            return Err("every split needs a positive share".into());
        }
        Ok(SplitSpec { parts: [train, val, test] })
    }

    pub fn ratios(&self) -> [f64; 3] {
        let total: u32 = self.parts.iter().sum();
        self.parts.map(|p| p as f64 / total as f64)
    }

    /// Contiguous train, validation and test ranges covering `0..len`.
    ///
    /// Train and validation sizes are rounded down; the test split takes the
    /// remainder.
    pub fn boundaries(&self, len: usize) -> [Range<usize>; 3] {
        let total: u64 = self.parts.iter().map(|&p| p as u64).sum();
        let n_train = (len as u64 * self.parts[0] as u64 / total) as usize;
        let n_val = (len as u64 * self.parts[1] as u64 / total) as usize;
        [0..n_train, n_train..n_train + n_val, n_train + n_val..len]
    }
}

impl FromStr for SplitSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected train:val:test, got `{s}`"));
        }
        let p: Vec<u32> = parts
            .iter()
            .map(|p| p.trim().parse::<u32>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        SplitSpec::new(p[0], p[1], p[2])
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.parts[0], self.parts[1], self.parts[2])
    }
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Splits `len` rows and checks every split holds at least one window of
/// `window` consecutive points.
pub fn split(len: usize, spec: SplitSpec, window: usize) -> Result<[Range<usize>; 3]> {
    let ranges = spec.boundaries(len);
    for (name, r) in SPLIT_NAMES.iter().zip(&ranges) {
        if r.len() < window {
            return Err(MouError::config(
                "dataset.split_ratio",
                format!("{name} split has {} rows, fewer than lookback+horizon = {window}", r.len()),
            ));
        }
    }
    Ok(ranges)
}

/// Per-variable z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose training range is constant; they keep `std = 1`.
    pub constant: Vec<bool>,
}

impl Normalizer {
    /// Fits mean and population standard deviation on `range` of each column.
    pub fn fit(columns: &[Vec<f64>], range: Range<usize>) -> Self {
        let n = range.len().max(1) as f64;
        let mut out = Normalizer { mean: Vec::new(), std: Vec::new(), constant: Vec::new() };
        for col in columns {
            let x = &col[range.clone()];
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            let constant = !(std > 1e-12 * mean.abs().max(1.0));
            out.mean.push(mean);
            out.std.push(if constant { 1.0 } else { std });
            out.constant.push(constant);
        }
        out
    }

    pub fn normalize(&self, var: usize, x: f64) -> f64 {
        (x - self.mean[var]) / self.std[var]
    }

    pub fn denormalize(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }
}

/// Overlapping patches of one variable's look-back window.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    /// Row-major `N×P`.
    pub patches: Vec<f32>,
    pub n_patches: usize,
    pub patch_len: usize,
    pub variable: usize,
    pub offset: usize,
}

impl PatchSequence {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.patches[i * self.patch_len..(i + 1) * self.patch_len]
    }
}

/// `floor((L − P)/S) + 1`, or `None` when no patch fits.
pub fn n_patches(lookback: usize, patch_len: usize, stride: usize) -> Option<usize> {
    (patch_len > 0 && stride > 0 && lookback >= patch_len).then(|| (lookback - patch_len) / stride + 1)
}

/// Cuts `x` into windows of `patch_len` points taken every `stride` points.
/// A ragged tail shorter than a stride is dropped.
pub fn patch(x: &[f32], patch_len: usize, stride: usize, variable: usize, offset: usize) -> Result<PatchSequence> {
    let n = n_patches(x.len(), patch_len, stride).ok_or_else(|| {
        MouError::Tensor(mou_autograd::TensorError::arg(
            "patch",
            format!("series of length {} shorter than patch length {patch_len} (stride {stride})", x.len()),
        ))
    })?;
    let mut patches = Vec::with_capacity(n * patch_len);
    for i in 0..n {
        patches.extend_from_slice(&x[i * stride..i * stride + patch_len]);
    }
    Ok(PatchSequence { patches, n_patches: n, patch_len, variable, offset })
}
