use std::ops::Range;
use std::sync::Arc;

use mou_autograd::Tensor;

use super::{split, Features, Normalizer, SeriesTable, SplitSpec};
use crate::error::{MouError, Result};

/// Paired look-back and horizon windows for all variables at some offsets.
#[derive(Debug, Clone)]
pub struct ForecastBatch {
    /// `B×M×L`.
    pub inputs: Tensor<f32>,
    /// `B×M×T`.
    pub targets: Tensor<f32>,
    /// Statistics that map the values back to the raw scale, if normalised.
    pub normalizer: Option<Arc<Normalizer>>,
    pub offsets: Vec<usize>,
}

impl ForecastBatch {
    /// Maps a `B×M×T`-shaped tensor back to the raw scale.
    pub fn denormalize(&self, values: &Tensor<f32>) -> Tensor<f32> {
        let Some(norm) = &self.normalizer else { return values.clone() };
        let shape = values.shape();
        let (m, t) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let mut out = values.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = norm.denormalize((i / t) % m, *v as f64) as f32;
        }
        out
    }
}

/// All stride-1 windows inside one split.
///
/// Sample `i` is variable `i % M` at window offset `i / M`; with channel
/// independence every variable contributes its own samples.
#[derive(Debug, Clone)]
pub struct WindowSet {
    series: Arc<Vec<Vec<f32>>>,
    range: Range<usize>,
    lookback: usize,
    horizon: usize,
    normalizer: Option<Arc<Normalizer>>,
}

/// Windows of `lookback + horizon` points inside `range`, stride 1.
pub fn make_windows(
    series: Arc<Vec<Vec<f32>>>,
    range: Range<usize>,
    lookback: usize,
    horizon: usize,
    normalizer: Option<Arc<Normalizer>>,
) -> Result<WindowSet> {
    if lookback == 0 || horizon == 0 {
        return Err(MouError::config("forecast", "lookback and horizon must be positive"));
    }
    if range.len() < lookback + horizon {
        return Err(MouError::config(
            "forecast",
            format!("range of {} points holds no window of {}+{}", range.len(), lookback, horizon),
        ));
    }
    if series.iter().any(|c| c.len() < range.end) {
        return Err(MouError::config("forecast", "range exceeds the series"));
    }
    Ok(WindowSet { series, range, lookback, horizon, normalizer })
}

impl WindowSet {
    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn n_windows(&self) -> usize {
        self.range.len() + 1 - self.lookback - self.horizon
    }

    pub fn n_variables(&self) -> usize {
        self.series.len()
    }

    /// Channel-independent sample count (windows × variables).
    pub fn len(&self) -> usize {
        self.n_windows() * self.n_variables()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn normalizer(&self) -> Option<&Arc<Normalizer>> {
        self.normalizer.as_ref()
    }

    /// `(window offset, variable)` of sample `i`.
    pub fn sample(&self, i: usize) -> (usize, usize) {
        let m = self.n_variables();
        (i / m, i % m)
    }

    pub fn input(&self, offset: usize, variable: usize) -> &[f32] {
        let s = self.range.start + offset;
        &self.series[variable][s..s + self.lookback]
    }

    pub fn target(&self, offset: usize, variable: usize) -> &[f32] {
        let s = self.range.start + offset + self.lookback;
        &self.series[variable][s..s + self.horizon]
    }

    /// Stacks samples into `B×L` inputs and `B×T` targets.
    pub fn assemble(&self, samples: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let mut x = Vec::with_capacity(samples.len() * self.lookback);
        let mut y = Vec::with_capacity(samples.len() * self.horizon);
        for &i in samples {
            let (o, v) = self.sample(i);
            x.extend_from_slice(self.input(o, v));
            y.extend_from_slice(self.target(o, v));
        }
        let b = samples.len();
        (
            Tensor::new(vec![b, self.lookback], x).expect("window sizes"),
            Tensor::new(vec![b, self.horizon], y).expect("window sizes"),
        )
    }

    /// The multivariate windows at `offsets`.
    pub fn batch(&self, offsets: &[usize]) -> ForecastBatch {
        let m = self.n_variables();
        let samples: Vec<usize> = offsets.iter().flat_map(|&o| (0..m).map(move |v| o * m + v)).collect();
        let (x, y) = self.assemble(&samples);
        let b = offsets.len();
        ForecastBatch {
            inputs: x.reshape(vec![b, m, self.lookback]).expect("window sizes"),
            targets: y.reshape(vec![b, m, self.horizon]).expect("window sizes"),
            normalizer: self.normalizer.clone(),
            offsets: offsets.to_vec(),
        }
    }

    /// One single-window batch per offset.
    pub fn iter(&self) -> impl Iterator<Item = ForecastBatch> + '_ {
        (0..self.n_windows()).map(|o| self.batch(&[o]))
    }
}

/// Splits, optionally standardises (statistics from train only) and windows
/// a table.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub names: Vec<String>,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub normalizer: Option<Arc<Normalizer>>,
}

pub fn prepare(
    table: &SeriesTable,
    spec: SplitSpec,
    features: Features,
    lookback: usize,
    horizon: usize,
    normalize: bool,
) -> Result<PreparedData> {
    let table = match features {
        Features::Multivariate => table.clone(),
        Features::Univariate => table.univariate(),
    };
    let [train, val, test] = split(table.len(), spec, lookback + horizon)?;
    let normalizer = normalize.then(|| Arc::new(Normalizer::fit(table.columns(), train.clone())));
    let series: Vec<Vec<f32>> = table
        .columns()
        .iter()
        .enumerate()
        .map(|(v, col)| {
            col.iter().map(|&x| normalizer.as_ref().map_or(x, |n| n.normalize(v, x)) as f32).collect()
        })
        .collect();
    let series = Arc::new(series);
    let w = |r: Range<usize>| make_windows(series.clone(), r, lookback, horizon, normalizer.clone());
    Ok(PreparedData { names: table.names().to_vec(), train: w(train)?, val: w(val)?, test: w(test)?, normalizer })
}
