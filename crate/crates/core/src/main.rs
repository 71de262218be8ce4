use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sais::experiment::{self, ExperimentConfig, Grid, OutputFormat, Preset};
use sais::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "sais", version, about = "Stochastic-approximation adaptive importance sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment: a trace per arm and the MSE over replications.
    Run(RunArgs),
    /// Regenerate the MSE table for the three built-in experiments.
    Table1(TableArgs),
    /// Tabulate the target and the adapted proposal over a grid.
    DensityCurve(CurveArgs),
    /// Run the numerical self-checks.
    Check {
        #[arg(long, env = "SAIS_SEED", default_value_t = experiment::DEFAULT_SEED)]
        seed: u64,
    },
    /// Print the configuration of a built-in experiment as JSON.
    Config {
        #[arg(long, default_value = "normal-mean")]
        experiment: String,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Built-in experiment: normal-mean, cauchy-scale or mixture-weights.
    #[arg(long, default_value = "normal-mean", conflicts_with = "config")]
    experiment: String,
    /// JSON configuration file; replaces the built-in experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    gain_c: Option<f64>,
    #[arg(long)]
    gain_t0: Option<f64>,
    #[arg(long, env = "SAIS_SEED")]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::preset(Preset::parse(&self.experiment)?),
        };
        if let Some(r) = self.replications {
            config.replications = r;
        }
        if let Some(t) = self.iterations {
            config.iterations = t;
        }
        if let Some(n) = self.batch {
            config.batch = n;
        }
        if let Some(c) = self.gain_c {
            config.gain.c = c;
        }
        if let Some(t0) = self.gain_t0 {
            config.gain.t0 = t0;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for traces and the MSE table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Add ESS and KL columns to the traces.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[arg(long, default_value_t = experiment::DEFAULT_REPLICATIONS)]
    replications: usize,
    #[arg(long, env = "SAIS_SEED", default_value_t = experiment::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Iterations at which to evaluate the proposal.
    #[arg(long, value_delimiter = ',', default_value = "0,100")]
    at: Vec<usize>,
    /// Grid as lo,hi,step.
    #[arg(long, default_value = "-5,6,0.01", allow_hyphen_values = true)]
    grid: String,
    /// Replication whose trace is plotted.
    #[arg(long, default_value_t = 0)]
    replication: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let mut config = args.config.resolve()?;
            if args.out.is_some() {
                config.out = args.out;
            }
            if let Some(format) = args.format {
                config.format = format;
            }
            config.diagnostics |= args.diagnostics;
            let output = experiment::run(&config)?;
            print!("{}", experiment::mse_csv(std::slice::from_ref(&output.report)));
            for file in &output.files {
                eprintln!("wrote {}", file.display());
            }
        }
        Command::Table1(args) => {
            let table = experiment::table1(args.seed, args.replications)?;
            let text = match args.format {
                TableFormat::Text => table.render(),
                TableFormat::Csv => table.csv(),
                TableFormat::Json => serde_json::to_string_pretty(&table)? + "\n",
            };
            emit(args.out.as_ref(), &text)?;
        }
        Command::DensityCurve(args) => {
            let config = args.config.resolve()?;
            let grid: Grid = args.grid.parse()?;
            let curve = experiment::density_curve(&config, &args.at, grid, args.replication)?;
            emit(args.out.as_ref(), &curve.csv())?;
        }
        Command::Check { seed } => {
            let results = experiment::check(seed)?;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::Config { experiment } => {
            println!("{}", ExperimentConfig::preset(Preset::parse(&experiment)?).to_json()?);
        }
    }
    Ok(true)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 4,
        Error::IterationDiverged { .. }
        | Error::TooManyDivergent { .. }
        | Error::NonfiniteParameter { .. }
        | Error::NonfiniteWeight { .. }
        | Error::ProposalZeroAtSample { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
