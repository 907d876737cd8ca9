use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use uniflux::calibrate::CalibrationError;
use uniflux::config::DEFAULT_SEED;
use uniflux::csv::{emit_flux, emit_profile, CsvError};
use uniflux::{
    calibrate_sources, run_experiment, run_preset, ConfigError, ExperimentConfig, Preset, PresetError, RawConfig,
    RunError,
};

#[derive(Parser)]
#[command(name = "uniflux", version, about = "Particle diffusion between implicit baths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a canned experiment.
    Preset {
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Find source rates holding the given boundary concentrations.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cl: f64,
        #[arg(long)]
        cr: f64,
        #[arg(long)]
        tol: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    NotConverged(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<PresetError> for Failure {
    fn from(e: PresetError) -> Self {
        match e {
            PresetError::Unknown(_) => Failure::Config(e.to_string()),
            PresetError::Run(r) => r.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::NotConverged { .. } => Failure::NotConverged(e.to_string()),
            CalibrationError::Run(r) => r.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))
}

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut raw = RawConfig::from_file(config)?;
    if let Some(seed) = seed {
        raw.set("seed", seed.to_string())?;
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

fn preset(name: &str, seed: u64, out: &Path) -> Result<(), Failure> {
    let preset: Preset = name.parse()?;
    ensure_dir(out)?;
    let report = run_preset(preset, seed, Some(out))?;
    print!("{}", report.summary());
    Ok(())
}

fn run(config: &Path, seed: Option<u64>, out: PathBuf) -> Result<(), Failure> {
    let mut config = load(config, seed)?;
    config.output_path = out;
    if let Some(name) = &config.preset {
        return preset(name, config.seed, &config.output_path);
    }
    let result = run_experiment(&config)?;
    ensure_dir(&config.output_path)?;
    let profile = result.normalized_profile().map_err(|e| Failure::Runtime(e.to_string()))?;
    emit_profile(&profile, &config.output_path.join("profile.csv"))?;
    if !result.fluxes.is_empty() {
        emit_flux(&result.fluxes, &config.output_path.join("flux.csv"))?;
    }
    let l = result.ledger;
    println!(
        "trajectories {} injected lo {} hi {} absorbed lo {} hi {} elapsed {}",
        result.profile.n_trajectories(),
        l.injected_lo,
        l.injected_hi,
        l.absorbed_lo,
        l.absorbed_hi,
        l.elapsed
    );
    Ok(())
}

fn calibrate(config: &Path, cl: f64, cr: f64, tol: f64) -> Result<(), Failure> {
    let config = load(config, None)?;
    let r = calibrate_sources((cl, cr), &config, tol)?;
    println!("rate_lo = {:.9e}", r.rate_lo);
    println!("rate_hi = {:.9e}", r.rate_hi);
    println!("achieved_c_lo = {:.9}", r.achieved_c_lo);
    println!("achieved_c_hi = {:.9}", r.achieved_c_hi);
    println!("j_net = {:.9e} +- {:.3e}", r.j_net_estimate, r.j_net_stderr);
    println!("iterations = {}", r.iterations);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Preset { name, out } => preset(&name, DEFAULT_SEED, &out),
        Command::Calibrate { config, cl, cr, tol } => calibrate(&config, cl, cr, tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
