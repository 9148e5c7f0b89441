//! `harris`: experiment runner for Harris flows and their noise spectra.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! failure (clock stall, Cholesky breakdown, ill-conditioned fit, ...).

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "harris", version, about = "Harris flows, dual semigroups and noise spectra")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the resolved configuration (the defaults unless overridden) and exit.
    #[arg(long, global = true)]
    show_config: bool,

    /// Correlation family: exp_power, indicator or tabulated.
    #[arg(long = "b", global = true, value_name = "KIND")]
    b: Option<String>,
    #[arg(long, global = true)]
    c: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true, value_name = "CSV")]
    table_path: Option<String>,
    /// Elementary set, e.g. "0,0.25;0.5,0.75".
    #[arg(long = "F", global = true, value_name = "INTERVALS", allow_hyphen_values = true)]
    f_set: Option<String>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    dt: Option<String>,
    #[arg(long = "dt-w", global = true, allow_hyphen_values = true)]
    dt_w: Option<String>,
    /// Comma-separated joining parameters; `1-` and `1+` are accepted.
    #[arg(long, global = true, allow_hyphen_values = true)]
    rho: Option<String>,
    /// Resolvent sweep "lo,hi".
    #[arg(long, global = true)]
    lambda_window: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Any other configuration key, as KEY=VALUE (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Classical or nonclassical noise.
    Classify,
    /// n-point motion of the flow: trajectories.csv and merges.csv.
    SimulateFlow,
    /// Duality residuals of the reflecting/absorbing semigroups.
    DualityCheck,
    /// Resolvent density at the origin and the subordinator exponent.
    ResolventExponent,
    /// P(spectral set avoids F) by three routes.
    SpectralAvoid,
    /// P(spectral set nonempty) by three Monte Carlo routes and the PDE.
    NonemptyProb,
    /// Generating function of the spectral measure restricted to F.
    Genfun,
    /// Box-counting and resolvent dimension of spectral sets.
    Dimension,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::SimulateFlow => "simulate-flow",
            Command::DualityCheck => "duality-check",
            Command::ResolventExponent => "resolvent-exponent",
            Command::SpectralAvoid => "spectral-avoid",
            Command::NonemptyProb => "nonempty-prob",
            Command::Genfun => "genfun",
            Command::Dimension => "dimension",
        }
    }
}

/// Everything that stops a run, with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] harris::Error),
    #[error("io: {0}")]
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Model(e) if e.is_numerical() => 3,
            Failure::Model(_) => 2,
            Failure::Io(_) => 1,
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    if let Some(p) = &cli.config {
        cfg.load_file(p)?;
    }
    let flags = [
        ("b.kind", "b", &cli.b),
        ("b.c", "c", &cli.c),
        ("b.alpha", "alpha", &cli.alpha),
        ("b.table_path", "table-path", &cli.table_path),
        ("F", "F", &cli.f_set),
        ("n", "n", &cli.n),
        ("seed", "seed", &cli.seed),
        ("dt", "dt", &cli.dt),
        ("dt_w", "dt-w", &cli.dt_w),
        ("rho", "rho", &cli.rho),
        ("lambda_window", "lambda-window", &cli.lambda_window),
        ("out", "out", &cli.out),
    ];
    for (key, flag, v) in flags {
        if let Some(v) = v {
            cfg.set(key, v, flag)?;
        }
    }
    for kv in &cli.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(ConfigError {
                origin: "--set".into(),
                message: format!("expected KEY=VALUE, got `{kv}`"),
            });
        };
        cfg.set(k.trim(), v, "set")?;
    }
    Ok(cfg)
}

fn threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("HARRIS_THREADS") else {
        return Ok(());
    };
    let bad = || ConfigError {
        origin: "HARRIS_THREADS".into(),
        message: format!("expected a positive integer, got `{v}`"),
    };
    let n: usize = v.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    // fails only if the pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = threads().map_err(Failure::from).and_then(|()| {
        let cfg = resolve(&cli)?;
        if cli.show_config {
            print!("{}", cfg.show());
            return Ok(());
        }
        let Some(cmd) = cli.command else {
            return Err(Failure::Config(ConfigError {
                origin: "command line".into(),
                message: "missing subcommand (see --help)".into(),
            }));
        };
        let json = run::run(cmd, &cfg)?;
        println!("{json}");
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
