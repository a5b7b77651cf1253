//! `hackwatch`: generate labeled episode logs, fit detectors, score logs
//! and run the evaluation protocols.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
//! 3 unusable data, 4 empty input.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hackwatch::mitigation::Technique;
use tracing_subscriber::filter::LevelFilter;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Data(String),
    Empty(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Empty(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Empty(m) => write!(f, "empty input: {m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Benchmark,
    Factorial,
    Ablation,
    Mitigation,
    Sensitivity,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Benchmark => "benchmark",
            ExperimentKind::Factorial => "factorial",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::Mitigation => "mitigation",
            ExperimentKind::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Parser)]
#[command(name = "hackwatch", version, about = "Reward-hacking detection for RL episode logs")]
struct Cli {
    /// Worker threads for episode scoring.
    #[arg(long, global = true, env = "HACKWATCH_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled episode streams from a TOML config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the detectors on the clean episodes of a log.
    Fit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Generation config whose environments the wireheading check knows.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Detector parameter file.
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every episode of a log with a fitted bundle.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        risk_threshold: Option<f64>,
        /// Skip the expensive detectors while the cheap ones are quiet.
        #[arg(long)]
        selective: bool,
    },
    /// Run an evaluation protocol end to end.
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Cross-validation folds for the benchmark protocols.
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_parser = parse_technique)]
        mitigation: Option<Technique>,
        #[arg(long)]
        intensity: Option<f64>,
    },
    /// Metrics, threshold sweep and ROC curves for scored episodes.
    Report {
        #[arg(long)]
        assessments: PathBuf,
        /// Episode log providing the ground-truth labels.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_technique(s: &str) -> Result<Technique, String> {
    s.parse().map_err(|e: hackwatch::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Generate { config, out } => commands::generate(&config, &out),
        Command::Fit { log, out, registry, detector, seed } => commands::fit(commands::FitArgs {
            log: &log,
            out: &out,
            registry: registry.as_deref(),
            detector: detector.as_deref(),
            seed,
        }),
        Command::Detect { model, log, out, risk_threshold, selective } => commands::detect(commands::DetectArgs {
            model: &model,
            log: &log,
            out: &out,
            risk_threshold,
            selective,
            jobs: cli.jobs,
        }),
        Command::Experiment { kind, config, out, folds, mitigation, intensity } => {
            commands::experiment(commands::ExperimentArgs {
                kind,
                config: config.as_deref(),
                out: &out,
                jobs: cli.jobs,
                folds,
                mitigation,
                intensity,
            })
        }
        Command::Report { assessments, labels, out } => commands::report(&assessments, &labels, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        _ => LevelFilter::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).with_target(false).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hackwatch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
