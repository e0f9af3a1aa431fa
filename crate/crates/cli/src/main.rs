use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mou_cli::commands::{self, Axis, Inspect, Selector, Split};
use mou_cli::config::{RunConfig, SEED_ENV};
use mou_core::{MouError, Result};

/// Train, ablate, inspect and cost MoU forecasters.
///
/// Exit status: 0 on success, 1 on a runtime failure, 2 on invalid
/// configuration or input.
#[derive(Parser)]
#[command(name = "mou", version)]
struct Cli {
    /// Log per-epoch progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `section.key = value` config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let env = std::env::var(SEED_ENV).ok();
        RunConfig::resolve(self.config.as_deref(), env.as_deref(), &self.overrides)
    }
}

#[derive(Args)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run config; defaults to the `config.resolved` next to the checkpoint.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "test")]
    split: Split,
}

impl CheckpointArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let path = self.config.clone().unwrap_or_else(|| commands::sibling_config(&self.checkpoint));
        RunConfig::resolve(Some(&path), None, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on one split.
    Evaluate(CheckpointArgs),
    /// Sweep one axis, training one cell per value and seed.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        axis: Axis,
        /// Seeds per cell, counting up from `train.seed`.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Comma-separated values replacing the default sweep.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Dump router decisions, attention maps or SSM token-mixing matrices.
    Inspect {
        #[command(flatten)]
        source: CheckpointArgs,
        #[arg(long)]
        what: Inspect,
        /// Sample index within the split.
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Stack layer index (all matching layers when omitted).
        #[arg(long)]
        layer: Option<usize>,
        /// Inner channel for ssm-map.
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Output directory; defaults to `inspect/` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-term multiply-accumulate counts and the attention comparator.
    Flops(ConfigArgs),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let out = commands::cmd_train(&cfg)?;
            print!("{}", out.report.to_table());
            println!("wrote {}", out.dir.display());
        }
        Command::Evaluate(args) => {
            let cfg = args.resolve()?;
            let m = commands::cmd_evaluate(&cfg, &args.checkpoint, args.split)?;
            println!("{{\"mse\":{},\"mae\":{}}}", m.mse, m.mae);
        }
        Command::Ablate { config, axis, seeds, values } => {
            let cfg = config.resolve()?;
            let values = (!values.is_empty()).then_some(values);
            let out = commands::cmd_ablate(&cfg, axis, seeds, values)?;
            print!("{}", out.to_table());
            println!("wrote {}", out.results.display());
        }
        Command::Inspect { source, what, sample, layer, channel, out } => {
            let cfg = source.resolve()?;
            let out = out.unwrap_or_else(|| source.checkpoint.parent().unwrap_or(std::path::Path::new(".")).join("inspect"));
            let sel = Selector { split: source.split, sample, layer, channel };
            for path in commands::cmd_inspect(&cfg, &source.checkpoint, what, &sel, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Flops(args) => print!("{}", commands::cmd_flops(&args.resolve()?).to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &MouError) -> u8 {
    if e.is_config() {
        2
    } else {
        1
    }
}
