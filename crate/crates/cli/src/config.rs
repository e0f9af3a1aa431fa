//! Flat `section.key = value` run configuration with a closed schema.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mou_core::data::{load_csv, prepare, synthetic, Features, PreparedData, SeriesTable, SplitSpec};
use mou_core::model::MODEL_KEYS;
use mou_core::training::TrainConfig;
use mou_core::{ModelConfig, MouError, Result};

/// Environment variable overriding `train.seed` (command-line flags win).
pub const SEED_ENV: &str = "MOU_SEED";

/// Keys owned by the run configuration itself; model and forecast keys are
/// delegated to [`ModelConfig`].
pub const RUN_KEYS: &[&str] = &[
    "dataset.features",
    "dataset.length",
    "dataset.name",
    "dataset.noise",
    "dataset.normalize",
    "dataset.path",
    "dataset.segment",
    "dataset.seed",
    "dataset.split_ratio",
    "dataset.synthetic",
    "dataset.target",
    "run.name",
    "run.out_dir",
    "train.batch_size",
    "train.epochs",
    "train.eval_batch_size",
    "train.lr",
    "train.patience",
    "train.seed",
    "train.shards",
    "train.steps_per_epoch",
];

/// Built-in generators usable instead of a CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Synthetic {
    #[default]
    None,
    /// Two sinusoids plus Gaussian noise (`dataset.noise` × signal std).
    Sines,
    /// Alternating oscillatory and persistent AR segments.
    Regimes,
    /// Gaussian random walk with step std `dataset.noise`.
    RandomWalk,
}

impl FromStr for Synthetic {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Synthetic::None),
            "sines" => Ok(Synthetic::Sines),
            "regimes" => Ok(Synthetic::Regimes),
            "random_walk" => Ok(Synthetic::RandomWalk),
            _ => Err(format!("expected none, sines, regimes or random_walk, got `{s}`")),
        }
    }
}

impl fmt::Display for Synthetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Synthetic::None => "none",
            Synthetic::Sines => "sines",
            Synthetic::Regimes => "regimes",
            Synthetic::RandomWalk => "random_walk",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    /// Label used in reports; defaults to the file stem or generator name.
    pub name: Option<String>,
    pub split: SplitSpec,
    pub target: Option<String>,
    pub features: Features,
    pub normalize: bool,
    pub synthetic: Synthetic,
    pub length: usize,
    pub seed: u64,
    pub noise: f64,
    pub segment: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: None,
            name: None,
            split: SplitSpec::new(6, 2, 2).expect("valid split"),
            target: None,
            features: Features::Multivariate,
            normalize: true,
            synthetic: Synthetic::None,
            length: 4000,
            seed: 0,
            noise: 0.1,
            segment: 200,
        }
    }
}

impl DatasetConfig {
    pub fn display_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match (&self.path, self.synthetic) {
            (_, s) if s != Synthetic::None => s.to_string(),
            (Some(p), _) => p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
            (None, _) => "unnamed".into(),
        }
    }

    /// Reads or generates the raw table.
    pub fn table(&self) -> Result<SeriesTable> {
        let table = match self.synthetic {
            Synthetic::None => {
                let path = self.path.as_ref().ok_or_else(|| MouError::config("dataset.path", "no dataset file given"))?;
                load_csv(path)?
            }
            Synthetic::Sines => synthetic::Sines::seeded(self.seed, self.noise).generate(self.length, self.seed),
            Synthetic::Regimes => synthetic::regime_switching(self.length, self.segment, self.seed),
            Synthetic::RandomWalk => synthetic::random_walk(self.length, self.noise, self.seed),
        };
        match &self.target {
            Some(t) => table.with_target(t),
            None => Ok(table),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub name: String,
    pub out_dir: PathBuf,
}

impl Default for RunInfo {
    fn default() -> Self {
        RunInfo { name: "default".into(), out_dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub run: RunInfo,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| MouError::config(key, format!("`{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(MouError::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl RunConfig {
    /// Every accepted key, sorted.
    pub fn keys() -> Vec<&'static str> {
        let mut keys: Vec<&str> = RUN_KEYS.iter().chain(MODEL_KEYS).copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let d = &mut self.dataset;
        let t = &mut self.train;
        match key {
            "dataset.path" => d.path = optional(value).map(PathBuf::from),
            "dataset.name" => d.name = optional(value),
            "dataset.split_ratio" => d.split = parse(key, value)?,
            "dataset.target" => d.target = optional(value),
            "dataset.features" => d.features = parse(key, value)?,
            "dataset.normalize" => d.normalize = parse_bool(key, value)?,
            "dataset.synthetic" => d.synthetic = parse(key, value)?,
            "dataset.length" => d.length = parse(key, value)?,
            "dataset.seed" => d.seed = parse(key, value)?,
            "dataset.noise" => d.noise = parse(key, value)?,
            "dataset.segment" => d.segment = parse(key, value)?,
            "train.lr" => t.lr = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.patience" => t.patience = parse(key, value)?,
            "train.shards" => t.shards = parse(key, value)?,
            "train.steps_per_epoch" => t.steps_per_epoch = parse(key, value)?,
            "train.eval_batch_size" => t.eval_batch_size = parse(key, value)?,
            "run.name" => self.run.name = value.to_string(),
            "run.out_dir" => self.run.out_dir = PathBuf::from(value),
            _ => return self.model.set(key, value),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (d, t) = (&self.dataset, &self.train);
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(String::new, |p| p.display().to_string());
        Some(match key {
            "dataset.path" => path(&d.path),
            "dataset.name" => d.name.clone().unwrap_or_default(),
            "dataset.split_ratio" => d.split.to_string(),
            "dataset.target" => d.target.clone().unwrap_or_default(),
            "dataset.features" => d.features.to_string(),
            "dataset.normalize" => d.normalize.to_string(),
            "dataset.synthetic" => d.synthetic.to_string(),
            "dataset.length" => d.length.to_string(),
            "dataset.seed" => d.seed.to_string(),
            "dataset.noise" => d.noise.to_string(),
            "dataset.segment" => d.segment.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.seed" => t.seed.to_string(),
            "train.patience" => t.patience.to_string(),
            "train.shards" => t.shards.to_string(),
            "train.steps_per_epoch" => t.steps_per_epoch.to_string(),
            "train.eval_batch_size" => t.eval_batch_size.to_string(),
            "run.name" => self.run.name.clone(),
            "run.out_dir" => self.run.out_dir.display().to_string(),
            _ => return self.model.get(key),
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| MouError::Parse {
                path: origin.to_path_buf(),
                line: i as u64 + 1,
                detail: format!("expected `section.key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| MouError::config(assignment, "overrides take the form section.key=value"))?;
        self.set(k.trim(), v)
    }

    /// Defaults, then the file, then `MOU_SEED`, then `--set` overrides;
    /// validates the result.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| MouError::io(path, e))?;
            cfg.apply_text(&text, path)?;
        }
        if let Some(seed) = env_seed {
            cfg.train.seed = seed.trim().parse().map_err(|e| MouError::config(SEED_ENV, format!("`{seed}`: {e}")))?;
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let d = &self.dataset;
        if d.synthetic == Synthetic::None && d.path.is_none() {
            return Err(MouError::config("dataset.path", "required unless dataset.synthetic is set"));
        }
        if d.synthetic != Synthetic::None {
            if d.length == 0 {
                return Err(MouError::config("dataset.length", "must be positive"));
            }
            if !(d.noise >= 0.0 && d.noise.is_finite()) {
                return Err(MouError::config("dataset.noise", "must be a finite non-negative number"));
            }
            if d.synthetic == Synthetic::Regimes && d.segment == 0 {
                return Err(MouError::config("dataset.segment", "must be positive"));
            }
        }
        if self.run.name.is_empty() {
            return Err(MouError::config("run.name", "must not be empty"));
        }
        Ok(())
    }

    /// All resolved values as sorted `key = value` lines; loads back to an
    /// equal config.
    pub fn to_text(&self) -> String {
        RunConfig::keys().into_iter().map(|k| format!("{k} = {}\n", self.get(k).expect("known key"))).collect()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run.out_dir.join(&self.run.name)
    }

    pub fn prepare_data(&self) -> Result<PreparedData> {
        let table = self.dataset.table()?;
        let d = &self.dataset;
        prepare(&table, d.split, d.features, self.model.lookback, self.model.horizon, d.normalize)
    }
}
