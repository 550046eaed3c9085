//! `trimon`: batch front end for circuit derivation, gate simulation,
//! calibration, benchmarking, tomography and qudit decoupling runs.

mod config;
mod error;
mod experiments;
mod manifest;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, Experiment};
use error::{CliError, EXIT_VALIDATION};
use manifest::{ManifestWriter, RunManifest, MANIFEST_FILE};
use validate::Severity;

#[derive(Debug, Parser)]
#[command(name = "trimon", version, about = "Pulse-level trimon simulations and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for results and the run manifest.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for stochastic experiments; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Mode frequencies and Kerr coefficients from the lumped circuit.
    DeriveParams,
    /// The twelve conditional transition frequencies.
    Spectrum,
    /// Population trajectories of a compiled gate or explicit tones.
    Simulate,
    /// Stark or deterministic-benchmarking calibration of a gate.
    Calibrate,
    /// Randomized benchmarking on one transition.
    Rb,
    /// Two-qubit state tomography with maximum-likelihood reconstruction.
    Qst,
    /// Two-qubit process tomography of a simulated gate.
    Qpt,
    /// Qudit dynamical decoupling under quasi-static noise.
    Dd,
    /// Two-qubit Hamiltonian-term synthesis.
    PauliSynth,
    /// Check a configuration without running it.
    Validate,
}

impl Command {
    fn experiment(self) -> Option<Experiment> {
        Some(match self {
            Command::DeriveParams => Experiment::DeriveParams,
            Command::Spectrum => Experiment::Spectrum,
            Command::Simulate => Experiment::Simulate,
            Command::Calibrate => Experiment::Calibrate,
            Command::Rb => Experiment::Rb,
            Command::Qst => Experiment::Qst,
            Command::Qpt => Experiment::Qpt,
            Command::Dd => Experiment::Dd,
            Command::PauliSynth => Experiment::PauliSynth,
            Command::Validate => return None,
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRIMON_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let code = match cli.command.experiment() {
        None => run_validate(&cli),
        Some(exp) => match run_experiment(&cli, exp) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}

fn run_validate(cli: &Cli) -> i32 {
    let Some(path) = &cli.config else {
        eprintln!("error: validate needs --config");
        return EXIT_VALIDATION;
    };
    let report = validate::validate_path(path, cli.seed);
    for f in &report.findings {
        println!("{f}");
    }
    println!("{}: {} finding(s)", report.config, report.findings.len());
    0
}

fn load(cli: &Cli) -> Result<(Config, Vec<u8>), CliError> {
    match &cli.config {
        Some(path) => Config::load(path),
        None => Ok((Config::default(), Vec::new())),
    }
}

/// Deletes the outputs listed by a previous manifest in `dir`.
fn clear_previous(dir: &Path) {
    let path = dir.join(MANIFEST_FILE);
    let Ok(text) = std::fs::read_to_string(&path) else { return };
    if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
        for f in old.outputs {
            let _ = std::fs::remove_file(dir.join(f));
        }
    }
}

fn run_experiment(cli: &Cli, exp: Experiment) -> Result<(), CliError> {
    let (cfg, bytes) = load(cli)?;
    if let Some(declared) = cfg.experiment {
        if declared != exp {
            return Err(CliError::Config(format!(
                "config declares experiment `{}` but `{}` was requested",
                declared.name(),
                exp.name()
            )));
        }
    }
    let mut report = validate::Report::default();
    let checked = Config { experiment: Some(exp), ..cfg.clone() };
    validate::check(&checked, cli.seed, &mut report);
    for f in &report.findings {
        match f.severity {
            Severity::Warning => log::warn!("{f}"),
            Severity::Error => eprintln!("{f}"),
        }
    }
    let mut errors = report.findings.iter().filter(|f| f.severity == Severity::Error);
    if let Some(first) = errors.next() {
        return Err(CliError::Config(format!("{} validation error(s), first: {first}", 1 + errors.count())));
    }

    let seed = cli.seed.or(cfg.seed);
    clear_previous(&cli.out);
    let mut manifest = ManifestWriter::new_manifest(exp.name(), cli.config.as_deref(), &bytes);
    manifest.seed = seed;
    manifest.threads = cli.threads;
    let writer = ManifestWriter::start(&cli.out, manifest)?;
    let mut outputs = experiments::Outputs::new(&cli.out);
    log::info!("running {}", exp.name());
    let result = experiments::run(exp, &cfg, seed, &mut outputs);
    writer.finish(outputs.files, result.as_ref().err())?;
    result
}
