//! Command-line front end: configuration, thread pool, output files and
//! one driver per experiment.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use meanfield_core::exec::Executor;
use meanfield_core::Error;
use rayon::prelude::*;

pub mod commands;
pub mod config;
pub mod output;

pub use config::{Command, PartialConfig, RunConfig};

pub const EXIT_OK: i32 = 0;
/// Bad invocation: invalid parameters, config or file errors.
pub const EXIT_INVALID: i32 = 1;
/// The experiment ran but did not establish its claim.
pub const EXIT_INCONCLUSIVE: i32 = 2;
/// The numerics broke down.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_INVALID,
            CliError::Core(e) => match e {
                Error::InvalidParameter { .. } | Error::Domain(_) => EXIT_INVALID,
                Error::Inconclusive(_)
                | Error::NotMonotone(_)
                | Error::VerificationFailure(_)
                | Error::NotExcitable { .. }
                | Error::PicardNotConverged { .. }
                | Error::FitInconclusive { .. } => EXIT_INCONCLUSIVE,
                Error::Diverged { .. } | Error::IntegratorFailure { .. } | Error::Peclet { .. } => EXIT_NUMERICAL,
            },
        }
    }
}

/// Ordered parallel map on the current rayon pool. Output order is the
/// index order, so results do not depend on the number of threads.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl Executor for Rayon {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about = "Mean-field excitable particle model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Finite-N particle system: CSV t,m_N,mu.
    Particles(RunArgs),
    /// Noiseless macroscopic ODE: CSV t,x,mu.
    MacroOde(RunArgs),
    /// Phase classification and threshold: JSON.
    Phase(RunArgs),
    /// Moment-closure path: CSV t,m,nu,V,z,y.
    Gauss(RunArgs),
    /// Equilibria of the closed system and their spectra: JSON.
    Spectrum(RunArgs),
    /// Noise level that destabilizes s1 or s2: JSON.
    SigmaC(RunArgs),
    /// Fokker-Planck evolution: CSV x,q dumps and JSON summaries.
    FokkerPlanck(RunArgs),
    /// Propagation-of-chaos rate: CSV N,error,stderr and JSON fit.
    ChaosRate(RunArgs),
    /// Gaussian-approximation rate: CSV sigma,error,stderr and JSON fit.
    GaussError(RunArgs),
    /// All CSVs behind the three figures.
    ReproduceFigures(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML config, or a manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, env = "MEANFIELD_THREADS")]
    threads: Option<usize>,
    #[command(flatten)]
    set: PartialConfig,
}

impl Sub {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Sub::Particles(a) => (Command::Particles, a),
            Sub::MacroOde(a) => (Command::MacroOde, a),
            Sub::Phase(a) => (Command::Phase, a),
            Sub::Gauss(a) => (Command::Gauss, a),
            Sub::Spectrum(a) => (Command::Spectrum, a),
            Sub::SigmaC(a) => (Command::SigmaC, a),
            Sub::FokkerPlanck(a) => (Command::FokkerPlanck, a),
            Sub::ChaosRate(a) => (Command::ChaosRate, a),
            Sub::GaussError(a) => (Command::GaussError, a),
            Sub::ReproduceFigures(a) => (Command::ReproduceFigures, a),
        }
    }
}

/// Parses `argv` (program name first), runs the experiment and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let (command, args) = cli.command.split();
    match execute(command, &args) {
        Ok(out) => {
            println!("{}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, args: &RunArgs) -> Result<PathBuf, CliError> {
    let file = args.config.as_deref().map(config::load_file).transpose()?;
    let cfg = RunConfig::resolve(command, file.as_ref(), &args.set)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    log::info!("{} with {} threads", command.name(), pool.current_num_threads());
    pool.install(|| commands::run_config(&cfg, &Rayon))
}
