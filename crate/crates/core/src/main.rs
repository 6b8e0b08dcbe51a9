use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use convex_shield::benchmarks::{APrev, BenchmarkKind};
use convex_shield::error::{Error, Result};
use convex_shield::evalcli::{self, ExperimentConfig, Overrides};
use convex_shield::safepredictor::ModelKind;

/// Exit status when a safe model is found to violate a constraint.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "convex-shield", version, about = "Safe predictors with guaranteed input-output constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    benchmark: Option<Benchmark>,
    /// Previous advisory for caslite.
    #[arg(long, global = true, value_enum)]
    a_prev: Option<Prev>,
    #[arg(long, global = true, value_enum)]
    model: Option<Model>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Points per input dimension for verification and export grids.
    #[arg(long, global = true)]
    probe_resolution: Option<usize>,
    /// Experiment directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset CSV (default: <out>/dataset.csv).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Constraint JSON (default: <out>/constraints.json).
    #[arg(long, global = true)]
    constraints: Option<PathBuf>,
    /// Model JSON (default: <out>/model_<model>.json).
    #[arg(long, global = true)]
    model_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset and its constraints.
    Gen,
    /// Train a standard or safe model.
    Train,
    /// Count constraint violations of a saved model on a probe grid.
    Verify,
    /// Write CSV curves and surfaces for plotting.
    ExportPlots,
    /// Tabulate accuracy and violations of verified runs.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    Synthetic1d,
    Synthetic2d,
    Caslite,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prev {
    Coc,
    Cl1500,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Standard,
    Safe,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            benchmark: self.benchmark.map(|b| match b {
                Benchmark::Synthetic1d => BenchmarkKind::Synthetic1d,
                Benchmark::Synthetic2d => BenchmarkKind::Synthetic2d,
                Benchmark::Caslite => BenchmarkKind::Caslite,
            }),
            a_prev: self.a_prev.map(|a| match a {
                Prev::Coc => APrev::Coc,
                Prev::Cl1500 => APrev::Cl1500,
            }),
            model: self.model.map(|m| match m {
                Model::Standard => ModelKind::Standard,
                Model::Safe => ModelKind::Safe,
            }),
            seed: self.seed,
            epochs: self.epochs,
            probe_resolution: self.probe_resolution,
            output_dir: self.out.clone(),
        }
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", p.display())))
            })?),
            None => None,
        };
        ExperimentConfig::resolve(text.as_deref(), &self.overrides())
    }
}

fn run(cli: &Cli) -> Result<bool> {
    evalcli::configure_threads()?;
    match cli.command {
        Command::Gen => {
            let out = evalcli::cmd_gen(&cli.experiment()?)?;
            println!("{} rows -> {}", out.rows, out.dataset.display());
            println!("constraints -> {}", out.constraints.display());
            Ok(true)
        }
        Command::Train => {
            let cfg = cli.experiment()?;
            let out = evalcli::cmd_train(&cfg, cli.data.as_deref(), cli.constraints.as_deref())?;
            if let Some(last) = out.history.last() {
                println!("epoch {}: train loss {:.6}", last.epoch, last.loss);
            }
            println!("test {}: {}", out.test_accuracy.label(), out.test_accuracy);
            println!("max checkpoint violations: {}", out.max_violations);
            println!("model -> {}", out.model.display());
            println!("metrics -> {}", out.metrics.display());
            Ok(!out.safety_failure())
        }
        Command::Verify => {
            let cfg = cli.experiment()?;
            let out = evalcli::cmd_verify(&cfg, cli.model_file.as_deref(), cli.constraints.as_deref())?;
            println!("{}", out.report.to_json()?);
            Ok(!out.safety_failure())
        }
        Command::ExportPlots => {
            let cfg = cli.experiment()?;
            for p in evalcli::cmd_export_plots(&cfg, cli.model_file.as_deref(), cli.constraints.as_deref())? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Report => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            print!("{}", evalcli::cmd_report(&dir)?.to_text());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: safe model violated a constraint");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
