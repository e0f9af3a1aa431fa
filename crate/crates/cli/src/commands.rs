//! Subcommand implementations; each returns what it wrote or computed so
//! callers (and tests) can check results without parsing stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use mou_core::data::WindowSet;
use mou_core::model::{count_flops, load_checkpoint, save_checkpoint, FlopReport};
use mou_core::moa::ssm::attention_matrix;
use mou_core::training::{evaluate, train, Metrics, TrainReport};
use mou_core::{MoUModel, MouError, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// The ablation layer orders plus the canonical `MFCA`.
pub const ABLATION_ORDERS: [&str; 11] = ["AA", "MM", "MFA", "AAA", "MMA", "AMM", "MAM", "AMA", "AFM", "AFCM", "MFCA"];
pub const LOOKBACKS: [usize; 4] = [192, 336, 512, 720];
pub const LOOKBACKS_ILI: [usize; 4] = [48, 60, 104, 144];

/// Single-line final metrics; contains nothing run-dependent besides the
/// results, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub dataset: String,
    #[serde(rename = "L")]
    pub lookback: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Serialize)]
struct TimingRecord {
    wall_s: f64,
    train_wall_s: f64,
    steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub report: TrainReport,
    pub metrics: MetricsRecord,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| MouError::Output { path: path.to_path_buf(), source })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| MouError::Output { path: path.to_path_buf(), source })
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("plain records serialise");
    s.push('\n');
    s
}

/// Trains one configuration and writes `config.resolved`, `checkpoint.bin`,
/// `report.csv`, `metrics.json` and `timing.json` into its run directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    let data = cfg.prepare_data()?;
    let dir = cfg.run_dir();
    create_dir(&dir)?;
    write(&dir.join("config.resolved"), cfg.to_text())?;
    let mut model = MoUModel::<f32>::new(cfg.model.clone(), cfg.train.seed)?;
    let report = train(&mut model, &data, &cfg.train)?;
    save_checkpoint(&model, dir.join("checkpoint.bin"))?;
    write(&dir.join("report.csv"), report.to_csv())?;
    let metrics = MetricsRecord {
        dataset: cfg.dataset.display_name(),
        lookback: cfg.model.lookback,
        horizon: cfg.model.horizon,
        seed: cfg.train.seed,
        mse: report.test.mse,
        mae: report.test.mae,
    };
    write(&dir.join("metrics.json"), json_line(&metrics))?;
    let timing = TimingRecord { wall_s: start.elapsed().as_secs_f64(), train_wall_s: report.wall_s, steps: report.steps };
    write(&dir.join("timing.json"), json_line(&timing))?;
    Ok(TrainOutcome { dir, report, metrics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    Train,
    Val,
    #[default]
    Test,
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("expected train, val or test, got `{s}`")),
        }
    }
}

/// The run config written next to a checkpoint.
pub fn sibling_config(checkpoint: &Path) -> PathBuf {
    checkpoint.parent().unwrap_or(Path::new(".")).join("config.resolved")
}

fn load_model_for(cfg: &RunConfig, checkpoint: &Path) -> Result<MoUModel<f32>> {
    let model = load_checkpoint(checkpoint)?;
    model.verify_config(&cfg.model)?;
    Ok(model)
}

fn windows(data: mou_core::data::PreparedData, split: Split) -> WindowSet {
    match split {
        Split::Train => data.train,
        Split::Val => data.val,
        Split::Test => data.test,
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, split: Split) -> Result<Metrics> {
    let model = load_model_for(cfg, checkpoint)?;
    let w = windows(cfg.prepare_data()?, split);
    evaluate(&model, &w, cfg.train.eval_batch_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Order,
    Extractor,
    Lookback,
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "order" => Ok(Axis::Order),
            "extractor" => Ok(Axis::Extractor),
            "lookback" => Ok(Axis::Lookback),
            _ => Err(format!("expected order, extractor or lookback, got `{s}`")),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Order => "order",
            Axis::Extractor => "extractor",
            Axis::Lookback => "lookback",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Axis::Order => "model.order",
            Axis::Extractor => "model.extractor",
            Axis::Lookback => "forecast.lookback",
        }
    }

    /// Default sweep values for `cfg`'s dataset.
    pub fn values(self, cfg: &RunConfig) -> Vec<String> {
        match self {
            Axis::Order => ABLATION_ORDERS.iter().map(|s| s.to_string()).collect(),
            Axis::Extractor => mou_core::ExtractorKind::ALL.iter().map(|k| k.to_string()).collect(),
            Axis::Lookback => {
                let ili = cfg.dataset.display_name().to_ascii_lowercase().contains("ili");
                let set = if ili { LOOKBACKS_ILI } else { LOOKBACKS };
                set.iter().map(|l| l.to_string()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub val_mse: f64,
    pub test_mse: f64,
    pub test_mae: f64,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub axis: Axis,
    pub rows: Vec<AblationRow>,
    pub results: PathBuf,
}

impl AblationOutcome {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,value,seed,best_epoch,val_mse,test_mse,test_mae\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.axis.name(),
                r.value,
                r.seed,
                r.best_epoch,
                r.val_mse,
                r.test_mse,
                r.test_mae
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>10}  {:>6}  {:>10}  {:>10}  {:>10}\n", self.axis.name(), "seed", "val_mse", "test_mse", "test_mae");
        for r in &self.rows {
            let _ = writeln!(s, "{:>10}  {:>6}  {:>10.6}  {:>10.6}  {:>10.6}", r.value, r.seed, r.val_mse, r.test_mse, r.test_mae);
        }
        s
    }
}

/// Runs one training per (value, seed) cell; every cell config is validated
/// before the first one starts.
pub fn cmd_ablate(cfg: &RunConfig, axis: Axis, seeds: usize, values: Option<Vec<String>>) -> Result<AblationOutcome> {
    if seeds == 0 {
        return Err(MouError::config("--seeds", "must be at least 1"));
    }
    let values = values.unwrap_or_else(|| axis.values(cfg));
    let sweep = cfg.run_dir().join(format!("ablate-{}", axis.name()));
    let mut cells = Vec::new();
    for value in &values {
        for s in 0..seeds as u64 {
            let mut cell = cfg.clone();
            cell.set(axis.key(), value)?;
            cell.train.seed = cfg.train.seed + s;
            cell.run.out_dir = sweep.clone();
            cell.run.name = format!("{value}-seed{}", cell.train.seed);
            cell.validate()?;
            cells.push((value.clone(), cell));
        }
    }
    let mut rows = Vec::new();
    for (value, cell) in cells {
        let out = cmd_train(&cell)?;
        rows.push(AblationRow {
            value,
            seed: cell.train.seed,
            best_epoch: out.report.best_epoch,
            val_mse: out.report.best().val_mse,
            test_mse: out.report.test.mse,
            test_mae: out.report.test.mae,
        });
    }
    let outcome = AblationOutcome { axis, rows, results: sweep.join("results.csv") };
    write(&outcome.results, outcome.to_csv())?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inspect {
    Router,
    Attention,
    SsmMap,
}

impl FromStr for Inspect {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "router" => Ok(Inspect::Router),
            "attention" => Ok(Inspect::Attention),
            "ssm-map" => Ok(Inspect::SsmMap),
            _ => Err(format!("expected router, attention or ssm-map, got `{s}`")),
        }
    }
}

/// Which window to inspect and which layer/channel to dump.
#[derive(Debug, Clone, Default)]
pub struct Selector {
    pub split: Split,
    pub sample: usize,
    /// Stack layer index; all matching layers when absent.
    pub layer: Option<usize>,
    /// Inner channel for `ssm-map`.
    pub channel: usize,
}

fn matrix_csv(values: &[f64], n: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Writes CSV dumps for one input window into `out` and returns their paths.
pub fn cmd_inspect(cfg: &RunConfig, checkpoint: &Path, what: Inspect, sel: &Selector, out: &Path) -> Result<Vec<PathBuf>> {
    let model = load_model_for(cfg, checkpoint)?;
    let windows = windows(cfg.prepare_data()?, sel.split);
    if sel.sample >= windows.len() {
        return Err(MouError::config(
            "--sample",
            format!("sample {} out of range for {} samples in the split", sel.sample, windows.len()),
        ));
    }
    let (x, _) = windows.assemble(&[sel.sample]);
    let (_, trace) = model.predict_traced(&x)?;
    create_dir(out)?;
    let wanted = |layer: usize| sel.layer.is_none_or(|l| l == layer);
    let mut written = Vec::new();
    match what {
        Inspect::Router => {
            if trace.router.is_empty() {
                return Err(MouError::config("model.extractor", "router dumps need the mof extractor"));
            }
            let c = trace.router[0].scores.len();
            let mut s = String::from("token_index,expert_index,weight");
            for e in 0..c {
                let _ = write!(s, ",w{e}");
            }
            s.push('\n');
            for (t, d) in trace.router.iter().enumerate() {
                let winner = d.winner();
                let w = d.dense();
                let _ = write!(s, "{t},{winner},{}", w[winner]);
                for v in w {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
            let path = out.join("router.csv");
            write(&path, s)?;
            written.push(path);
        }
        Inspect::Attention => {
            for a in trace.attention.iter().filter(|a| wanted(a.layer)) {
                let (h, n) = (a.weights.shape()[1], a.weights.shape()[2]);
                for head in 0..h {
                    let path = out.join(format!("attention_layer{}_head{head}.csv", a.layer));
                    write(&path, matrix_csv(&a.weights.data()[head * n * n..(head + 1) * n * n], n))?;
                    written.push(path);
                }
            }
        }
        Inspect::SsmMap => {
            for t in trace.ssm.iter().filter(|t| wanted(t.layer)) {
                let (n, e) = (t.x.shape()[1], t.x.shape()[2]);
                if sel.channel >= e {
                    return Err(MouError::config("--channel", format!("channel {} out of range for {e} channels", sel.channel)));
                }
                let s = t.a.shape()[1];
                let delta = t.delta.clone().reshape(vec![n, e])?;
                let b = t.b.clone().reshape(vec![n, s])?;
                let c = t.c.clone().reshape(vec![n, s])?;
                let alpha = attention_matrix(&delta, &t.a, &b, &c, sel.channel)?;
                let path = out.join(format!("ssm_layer{}_channel{}.csv", t.layer, sel.channel));
                write(&path, matrix_csv(alpha.data(), n))?;
                written.push(path);
            }
        }
    }
    if written.is_empty() {
        let kind = if what == Inspect::Attention { "attention" } else { "Mamba" };
        let detail = match sel.layer {
            Some(l) => format!("layer {l} is not a {kind} layer of `{}`", cfg.model.order),
            None => format!("order `{}` has no {kind} layer", cfg.model.order),
        };
        return Err(MouError::config("--layer", detail));
    }
    Ok(written)
}

pub fn cmd_flops(cfg: &RunConfig) -> FlopReport {
    count_flops(&cfg.model)
}
