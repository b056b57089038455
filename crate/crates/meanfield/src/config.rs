//! Run configuration.
//!
//! Every option lives in one flat table. A run resolves its settings from
//! subcommand defaults, then a config file, then command-line flags, each
//! layer overriding the previous one. The resolved [`RunConfig`] is what
//! gets written to the manifest, so a manifest alone is enough to rerun.

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use meanfield_core::closure::OdeScheme;
use meanfield_core::closure::EquilibriumLabel;
use meanfield_core::mckean_vlasov::{InitLaw, KernelRule};
use meanfield_core::params::DEFAULT_SEED;
use meanfield_core::ModelParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Particles,
    MacroOde,
    Phase,
    Gauss,
    Spectrum,
    SigmaC,
    FokkerPlanck,
    ChaosRate,
    GaussError,
    ReproduceFigures,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Particles => "particles",
            Command::MacroOde => "macro-ode",
            Command::Phase => "phase",
            Command::Gauss => "gauss",
            Command::Spectrum => "spectrum",
            Command::SigmaC => "sigma-c",
            Command::FokkerPlanck => "fokker-planck",
            Command::ChaosRate => "chaos-rate",
            Command::GaussError => "gauss-error",
            Command::ReproduceFigures => "reproduce-figures",
        }
    }
}

/// Format of tabular outputs. Reports are always JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Initial condition of particles or of the limit law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Half the particles at +1, half at -1.
    Split,
    /// All mass at `x0`.
    Dirac,
    /// Normal with mean `x0` and standard deviation `init_sd`.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rk4,
    Euler,
}

impl From<Scheme> for OdeScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Rk4 => OdeScheme::Rk4,
            Scheme::Euler => OdeScheme::Euler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Trapezoid,
    Euler,
}

impl From<Kernel> for KernelRule {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Trapezoid => KernelRule::Trapezoid,
            Kernel::Euler => KernelRule::Euler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    S1,
    S2,
}

impl From<Label> for EquilibriumLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::S1 => EquilibriumLabel::S1,
            Label::S2 => EquilibriumLabel::S2,
        }
    }
}

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty ),* $(,)?) => {
        /// Fully resolved settings of one run.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct RunConfig {
            pub command: Command,
            pub out_dir: String,
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        /// One layer of settings: a config file or the command line.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
        #[serde(deny_unknown_fields)]
        pub struct PartialConfig {
            #[arg(skip)]
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub command: Option<Command>,
            /// Directory that receives every output of the run.
            #[arg(long = "out")]
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub out_dir: Option<String>,
            $(
                $(#[doc = $doc])*
                #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl RunConfig {
            /// Overrides every field that `layer` sets.
            pub fn apply(mut self, layer: &PartialConfig) -> Self {
                if let Some(v) = &layer.out_dir {
                    self.out_dir = v.clone();
                }
                $( if let Some(v) = &layer.$field { self.$field = v.clone(); } )*
                self
            }
        }
    };
}

run_config! {
    alpha: f64,
    theta: f64,
    sigma: f64,
    n_particles: usize,
    dt: f64,
    t_end: f64,
    seed: u64,
    /// Format of tabular outputs.
    format: Format,
    /// Initial position (or mean of the initial law) and initial field.
    x0: f64,
    mu0: f64,
    init: InitKind,
    init_sd: f64,
    /// Steps between recorded rows.
    record_stride: usize,
    /// Also write every particle position (particles only).
    record_particles: bool,
    /// Moment ODE scheme.
    scheme: Scheme,
    /// Quadrature rule for the field equation in Picard iterations.
    kernel: Kernel,
    /// Step of the deterministic cycle search.
    cycle_dt: f64,
    transient: f64,
    horizon: f64,
    theta1_tol: f64,
    grid_n: usize,
    label: Label,
    scan_lo: f64,
    scan_hi: f64,
    scan_points: usize,
    grid_lo: f64,
    grid_hi: f64,
    n_cells: usize,
    record_every: usize,
    /// Times at which the Fokker-Planck density is written out.
    dump_times: Vec<f64>,
    n_grid: Vec<usize>,
    sigma_grid: Vec<f64>,
    n_replicas: usize,
    n_samples: usize,
    picard_iter: usize,
    picard_tol: f64,
    /// Samples of the coarse Picard pass; 0 disables it.
    warm_start_samples: usize,
    fig1_theta: f64,
    fig1_sigmas: Vec<f64>,
    fig2_theta: f64,
    fig2_sigma: f64,
    fig3_theta: f64,
    fig3_sigma: f64,
    fig3_m0s: Vec<f64>,
}

impl RunConfig {
    /// Defaults for `command`. They reproduce the standard experiment of
    /// each subcommand.
    pub fn defaults(command: Command) -> Self {
        let base = RunConfig {
            command,
            out_dir: format!("out/{}", command.name()),
            alpha: 1.0,
            theta: 1.0,
            sigma: 0.1,
            n_particles: 1000,
            dt: 1e-3,
            t_end: 10.0,
            seed: DEFAULT_SEED,
            format: Format::Csv,
            x0: 0.5,
            mu0: 0.0,
            init: InitKind::Dirac,
            init_sd: 0.5,
            record_stride: 10,
            record_particles: false,
            scheme: Scheme::Rk4,
            kernel: Kernel::Trapezoid,
            cycle_dt: 1e-2,
            transient: 100.0,
            horizon: 1e4,
            theta1_tol: 1e-3,
            grid_n: 5,
            label: Label::S1,
            scan_lo: 1e-4,
            scan_hi: 1.0 / 3f64.sqrt() - 1e-4,
            scan_points: 200,
            grid_lo: -4.0,
            grid_hi: 4.0,
            n_cells: 400,
            record_every: 100,
            dump_times: vec![0.0, 10.0],
            n_grid: vec![10, 30, 100, 300, 1000],
            sigma_grid: vec![0.01, 0.02, 0.05, 0.1],
            n_replicas: 64,
            n_samples: 100_000,
            picard_iter: 30,
            picard_tol: 1e-6,
            warm_start_samples: 10_000,
            fig1_theta: 2.9,
            fig1_sigmas: vec![0.05, 0.8],
            fig2_theta: 3.5,
            fig2_sigma: 0.1,
            fig3_theta: 4.0,
            fig3_sigma: 3.0,
            fig3_m0s: vec![0.05, 2.0],
        };
        match command {
            Command::Particles => RunConfig {
                theta: 2.9,
                sigma: 0.8,
                t_end: 200.0,
                init: InitKind::Split,
                record_stride: 100,
                ..base
            },
            Command::MacroOde => RunConfig { theta: 3.5, dt: 1e-2, t_end: 50.0, record_stride: 1, ..base },
            Command::Phase => RunConfig { theta: 3.5, ..base },
            Command::Gauss => RunConfig {
                theta: 4.0,
                sigma: 3.0,
                x0: 0.05,
                t_end: 60.0,
                ..base
            },
            Command::Spectrum => RunConfig { theta: 3.0, ..base },
            Command::SigmaC => RunConfig { theta: 2.9, ..base },
            Command::FokkerPlanck => RunConfig {
                theta: 1.5,
                sigma: 0.5,
                dt: 1e-2,
                t_end: 50.0,
                x0: 0.0,
                init: InitKind::Normal,
                dump_times: vec![0.0, 50.0],
                ..base
            },
            Command::ChaosRate => RunConfig { sigma: 0.3, t_end: 1.0, init: InitKind::Normal, ..base },
            Command::GaussError => RunConfig {
                t_end: 1.0,
                mu0: 0.2,
                n_samples: 4000,
                picard_tol: 1e-12,
                scheme: Scheme::Euler,
                kernel: Kernel::Euler,
                ..base
            },
            Command::ReproduceFigures => RunConfig { t_end: 200.0, record_stride: 100, ..base },
        }
    }

    /// Defaults, then `file`, then `flags`.
    pub fn resolve(command: Command, file: Option<&PartialConfig>, flags: &PartialConfig) -> Result<Self, CliError> {
        for layer in file.into_iter().chain(Some(flags)) {
            if let Some(c) = layer.command {
                if c != command {
                    return Err(CliError::Config(format!(
                        "config was written for `{}`, not `{}`",
                        c.name(),
                        command.name()
                    )));
                }
            }
        }
        let mut cfg = RunConfig::defaults(command);
        if let Some(f) = file {
            cfg = cfg.apply(f);
        }
        Ok(cfg.apply(flags))
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            alpha: self.alpha,
            theta: self.theta,
            sigma: self.sigma,
            n_particles: self.n_particles,
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
        }
    }

    pub fn init_law(&self) -> InitLaw {
        match self.init {
            InitKind::Split => InitLaw::TwoPoint { a: 1.0 },
            InitKind::Dirac => InitLaw::Dirac { x: self.x0 },
            InitKind::Normal => InitLaw::Normal { mean: self.x0, sd: self.init_sd },
        }
    }

    /// TOML integers are signed, so seeds above `i64::MAX` cannot be
    /// written; manifests (JSON) carry them fine.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot write config as TOML: {e}")))
    }

    pub fn to_partial(&self) -> PartialConfig {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::from_value(v).expect("every field of RunConfig is a PartialConfig field")
    }
}

/// Reads a TOML config, or the `config` table of a run manifest when the
/// path ends in `.json`.
pub fn load_file(path: &Path) -> Result<PartialConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("invalid config {}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        let cfg = v
            .get_mut("config")
            .map(serde_json::Value::take)
            .ok_or_else(|| bad(&"manifest has no `config` entry"))?;
        serde_json::from_value(cfg).map_err(|e| bad(&e))
    } else {
        toml::from_str(&text).map_err(|e| bad(&e))
    }
}
