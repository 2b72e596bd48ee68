use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linkpred::config::ExperimentConfig;
use linkpred::datagen::{generate, write_dataset};
use linkpred::error::{Category, Error, Result};
use linkpred::experiment::{find_prediction_files, run_experiment, sweep_k, RunPlan};

/// Link prediction experiments on two-snapshot social graphs.
#[derive(Debug, Parser)]
#[command(name = "linkpred", version)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the configured variant and report its metrics.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the configured variant and compare it with the baselines.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recompute NDCG@K and MAP@K from a run's predictions files.
    SweepK {
        /// Run directory holding predictions-*.tsv.
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated K list.
        #[arg(long, value_delimiter = ',', default_values_t = [200, 300, 400, 500, 600, 700, 800, 900, 1000])]
        k: Vec<usize>,
        /// Output CSV (default: <run>/sweep-k.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the full model and every single-channel ablation.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate the baselines only.
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// `key = value` config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. `--set epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shortcut for `--set variant=<name>`.
    #[arg(long)]
    variant: Option<String>,
    /// Output root (runs) or dataset directory (generate).
    #[arg(short, long, default_value = "runs")]
    out: PathBuf,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(v) = &self.variant {
            cfg.set("variant", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_plan(common: &CommonArgs, plan: fn(&ExperimentConfig) -> RunPlan) -> Result<()> {
    let cfg = common.resolve()?;
    let summary = run_experiment(&cfg, &plan(&cfg), &common.out)?;
    println!("{}", summary.dir.join("report.tsv").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = common.resolve()?;
            let data = generate(&cfg.synth_config())?;
            let files = write_dataset(&data, &common.out)?;
            for p in [files.edges, files.activities, files.interactions, files.communities] {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Train { common } => run_plan(&common, RunPlan::train_only),
        Command::Evaluate { common } => run_plan(&common, RunPlan::evaluate),
        Command::Ablate { common } => run_plan(&common, RunPlan::ablate),
        Command::Baseline { common } => run_plan(&common, RunPlan::baselines_only),
        Command::SweepK { run, k, out } => {
            let csv = sweep_k(&find_prediction_files(&run)?, &k)?;
            let out = out.unwrap_or_else(|| run.join("sweep-k.csv"));
            std::fs::write(&out, &csv).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        Category::Config => 1,
        Category::Data => 2,
        Category::Numerical => 3,
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("linkpred: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
