//! Command-line front end: load a TOML experiment config, run the analytic
//! sweep (optionally with simulation), cross-validate, or dump the
//! transition matrix.
//!
//! Exit status: 0 all good, 1 configuration or usage error, 2 numerical
//! failure at any sweep point, 3 a verification z-score above 3.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use bmapq::config::ExperimentConfig;
use bmapq::sim::ArrivalMode;
use bmapq::sweep;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bmapq",
    version,
    about = "Packet-level QoS of a finite-buffer wireless queue: BMAP arrivals, AMC-limited service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the analytic model over the configured sweep and emit CSV.
    Analyze(RunArgs),
    /// Analytic sweep plus Monte Carlo columns (means and standard errors).
    Simulate(RunArgs),
    /// Cross-validate analytic metrics against simulation with z-scores.
    Verify(RunArgs),
    /// Dump the transition matrix at the first sweep point as sparse
    /// `row col value` triplets.
    DumpMatrix(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a TOML experiment configuration (empty file = defaults).
    config: Option<PathBuf>,
    /// Write output here instead of the config's `output` path or stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use a built-in configuration preset instead of a file
    /// (available: paper-7.1).
    #[arg(long)]
    preset: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let code = match cli.command {
        Command::Analyze(args) => run_sweep_command(args, false),
        Command::Simulate(args) => run_sweep_command(args, true),
        Command::Verify(args) => run_verify(args),
        Command::DumpMatrix(args) => run_dump_matrix(args),
    };
    ExitCode::from(code)
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut config = match (&args.preset, &args.config) {
        (Some(_), Some(_)) => {
            return Err("give either a config path or --preset, not both".into())
        }
        (Some(name), None) => match name.as_str() {
            "paper-7.1" => ExperimentConfig::reference(),
            other => return Err(format!("unknown preset `{other}` (available: paper-7.1)")),
        },
        (None, Some(path)) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        (None, None) => return Err("provide a config path or --preset".into()),
    };
    if let Some(seed) = args.seed {
        let mut settings = config.simulation_or_default();
        settings.seed = seed;
        config.simulation = Some(settings);
    }
    Ok(config)
}

fn write_output(args: &RunArgs, config: &ExperimentConfig, content: &str) -> Result<(), String> {
    let target = args.output.as_ref().or(config.output.as_ref());
    match target {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(|e| e.to_string())
        }
    }
}

fn run_sweep_command(args: RunArgs, simulate: bool) -> u8 {
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("error: {message}");
            return EXIT_CONFIG;
        }
    };
    let report = sweep::run_sweep(&config, simulate);
    if let Err(message) = write_output(&args, &config, &report.to_csv()) {
        eprintln!("error: {message}");
        return EXIT_NUMERIC;
    }
    if report.all_ok() {
        EXIT_OK
    } else {
        for row in report.rows.iter().filter(|r| r.outcome.is_err()) {
            if let Err(e) = &row.outcome {
                eprintln!("error at {} = {}: {e}", report.axis, row.value);
            }
        }
        EXIT_NUMERIC
    }
}

fn run_verify(args: RunArgs) -> u8 {
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("error: {message}");
            return EXIT_CONFIG;
        }
    };
    match config.simulation {
        None => {
            eprintln!("error: verify requires a [simulation] block in the config (or --seed)");
            return EXIT_CONFIG;
        }
        Some(settings) if settings.arrival_mode == ArrivalMode::ExactBmap => {
            eprintln!(
                "error: verify needs arrival_mode = \"poisson-per-phase\"; the exact batch \
                 mode is not expected to match the analytic model"
            );
            return EXIT_CONFIG;
        }
        Some(_) => {}
    }
    let report = match sweep::verify(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERIC;
        }
    };
    if let Err(message) = write_output(&args, &config, &report.to_csv()) {
        eprintln!("error: {message}");
        return EXIT_NUMERIC;
    }
    if report.any_flagged() {
        for (value, comparison) in &report.rows {
            for row in comparison.flagged() {
                eprintln!(
                    "verification failure at {} = {value}: {} z = {:.2}",
                    report.axis, row.metric, row.z
                );
            }
        }
        EXIT_VERIFY
    } else {
        EXIT_OK
    }
}

fn run_dump_matrix(args: RunArgs) -> u8 {
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("error: {message}");
            return EXIT_CONFIG;
        }
    };
    let value = config.sweep.values[0];
    match sweep::dump_point_matrix(&config, value) {
        Ok(text) => {
            if let Err(message) = write_output(&args, &config, &text) {
                eprintln!("error: {message}");
                return EXIT_NUMERIC;
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERIC
        }
    }
}
