//! One driver per subcommand. Each writes its outputs into the configured
//! directory and finishes with the manifest.
//!
//! CSV headers are a contract with the plotting scripts:
//!
//! | subcommand | file | header |
//! |---|---|---|
//! | particles | `particles.csv` | `t,m_N,mu` |
//! | particles | `positions.csv` | `t,x_0,...,x_{N-1}` |
//! | macro-ode | `macro.csv` | `t,x,mu` |
//! | gauss | `gauss.csv` | `t,m,nu,V,z,y` |
//! | fokker-planck | `fp_stationary.csv`, `fp_density_t<t>.csv` | `x,q` |
//! | chaos-rate | `chaos_rate.csv` | `N,error,stderr` |
//! | gauss-error | `gauss_error.csv` | `sigma,error,stderr` |

use std::path::PathBuf;

use meanfield_core::closure::{simulate_gauss_path, GaussPathConfig, GaussRecord};
use meanfield_core::closure::{
    excitability_slope, find_sigma_c, gauss_equilibria, gauss_equilibrium, spectrum_at, EquilibriumLabel,
    GaussState, ScanConfig, SpectrumReport,
};
use meanfield_core::exec::Executor;
use meanfield_core::flow::{
    classify_phase, detect_limit_cycle, integrate_strided, CycleConfig, MacroState, PhaseConfig,
};
use meanfield_core::fokker_planck::{
    evolve, stationary_density, stationary_residual, summarize, FpConfig, FpState, FpSummary, GridDensity, GridSpec,
    MAX_PECLET,
};
use meanfield_core::mckean_vlasov::{
    chaos_rate_experiment, gaussian_error_experiment, ChaosConfig, GaussErrorConfig, PicardConfig,
};
use meanfield_core::particle::{simulate_particles, ParticleRunConfig, ParticleState};
use meanfield_core::rng::RngStream;
use meanfield_core::stats::RateFit;
use meanfield_core::trajectory::Trajectory;
use meanfield_core::{Error, ModelParams};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, InitKind, RunConfig};
use crate::output::{OutDir, Table};
use crate::CliError;

/// Stream of the initial particle positions.
const INIT_STREAM: u64 = 0x494e_4954 << 32;
/// Stream of the fluctuation paths of the closed moment system.
const GAUSS_STREAM: u64 = 0x4741_5553 << 32;

/// Runs the experiment described by `cfg` and returns its output directory.
pub fn run_config<E: Executor>(cfg: &RunConfig, exec: &E) -> Result<PathBuf, CliError> {
    let mut out = OutDir::create(&cfg.out_dir)?;
    let result = match cfg.command {
        Command::Particles => particles(cfg, &mut out),
        Command::MacroOde => macro_ode(cfg, &mut out),
        Command::Phase => phase(cfg, &mut out),
        Command::Gauss => gauss(cfg, &mut out),
        Command::Spectrum => spectrum(cfg, &mut out),
        Command::SigmaC => sigma_c(cfg, &mut out),
        Command::FokkerPlanck => fokker_planck(cfg, &mut out),
        Command::ChaosRate => chaos_rate(cfg, &mut out, exec),
        Command::GaussError => gauss_error(cfg, &mut out, exec),
        Command::ReproduceFigures => reproduce_figures(cfg, &mut out),
    };
    // Partial results (a fit that failed its quality gate) still get a
    // manifest so they can be inspected and rerun.
    if result.is_ok() || !out.written().is_empty() {
        out.write_manifest(cfg)?;
    }
    result.map(|()| out.root().to_path_buf())
}

fn initial_particles(cfg: &RunConfig, n: usize, mu0: f64) -> Result<ParticleState, Error> {
    match cfg.init {
        InitKind::Split => ParticleState::split(n, mu0),
        InitKind::Dirac => ParticleState::new(vec![cfg.x0; n], mu0),
        InitKind::Normal => {
            let law = cfg.init_law();
            let base = RngStream::new(cfg.seed, INIT_STREAM, 0);
            ParticleState::new((0..n as u64).map(|i| law.sample_pair(&base.substream(i)).0).collect(), mu0)
        }
    }
}

fn particle_tables(cfg: &RunConfig, p: &ModelParams) -> Result<(Table, Option<Table>), CliError> {
    let init = initial_particles(cfg, p.n_particles, cfg.mu0)?;
    let run_cfg = ParticleRunConfig {
        record_stride: cfg.record_stride,
        record_particles: cfg.record_particles,
        ..Default::default()
    };
    let run = simulate_particles(&init, p, &run_cfg)?;
    let mut means = Table::new(["t", "m_N", "mu"]);
    for (t, s) in run.trajectory.iter() {
        means.push(vec![t, s.m, s.mu]);
    }
    let positions = run.particles.map(|tr| {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..p.n_particles).map(|i| format!("x_{i}")));
        let mut tab = Table::new(cols);
        for (t, x) in tr.iter() {
            let mut row = Vec::with_capacity(x.len() + 1);
            row.push(t);
            row.extend_from_slice(x);
            tab.push(row);
        }
        tab
    });
    Ok((means, positions))
}

fn particles(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let (means, positions) = particle_tables(cfg, &cfg.params())?;
    out.write_table("particles", &means, cfg.format)?;
    if let Some(pos) = positions {
        out.write_table("positions", &pos, cfg.format)?;
    }
    Ok(())
}

fn macro_table(tr: &Trajectory<MacroState>) -> Table {
    let mut tab = Table::new(["t", "x", "mu"]);
    for (t, s) in tr.iter() {
        tab.push(vec![t, s.x, s.mu]);
    }
    tab
}

fn macro_ode(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let tr = integrate_strided(
        MacroState::new(cfg.x0, cfg.mu0),
        cfg.alpha,
        cfg.theta,
        cfg.t_end,
        cfg.dt,
        cfg.record_stride,
    )?;
    out.write_table("macro", &macro_table(&tr), cfg.format)?;
    Ok(())
}

fn cycle_config(cfg: &RunConfig) -> CycleConfig {
    CycleConfig { dt: cfg.cycle_dt, transient: cfg.transient, horizon: cfg.horizon, ..Default::default() }
}

fn phase(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let pc = PhaseConfig {
        cycle: cycle_config(cfg),
        theta1_tol: cfg.theta1_tol,
        grid_n: cfg.grid_n,
        ..Default::default()
    };
    let r = classify_phase(cfg.alpha, cfg.theta, &pc)?;
    out.write_json(
        "phase.json",
        &json!({
            "alpha": r.alpha,
            "theta": r.theta,
            "theta1": r.theta1,
            "hopf": r.hopf,
            "phase": r.phase,
            "cycles": r.cycles,
        }),
    )
}

fn gauss_table(tr: &Trajectory<GaussRecord>) -> Table {
    let mut tab = Table::new(["t", "m", "nu", "V", "z", "y"]);
    for (t, r) in tr.iter() {
        tab.push(vec![t, r.m, r.nu, r.v, r.z, r.y]);
    }
    tab
}

fn gauss_run(cfg: &RunConfig, p: &ModelParams, init: (f64, f64), path_id: u64) -> Result<Table, CliError> {
    let pc = GaussPathConfig { scheme: cfg.scheme.into(), stride: cfg.record_stride, ..Default::default() };
    let tr = simulate_gauss_path(init, p, &RngStream::new(cfg.seed, GAUSS_STREAM, path_id), &pc)?;
    Ok(gauss_table(&tr))
}

fn gauss(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let tab = gauss_run(cfg, &cfg.params(), (cfg.x0, cfg.mu0), 0)?;
    out.write_table("gauss", &tab, cfg.format)?;
    Ok(())
}

fn state_json(s: GaussState) -> serde_json::Value {
    json!({ "m": s.m, "nu": s.nu, "V": s.v })
}

fn spectrum_json(r: &SpectrumReport) -> serde_json::Value {
    json!({
        "label": r.label,
        "point": state_json(r.point),
        "eigenvalues": r.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "max_real_part": r.max_real_part,
        "stable": r.stable,
        "residual": r.residual,
    })
}

fn spectrum(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    if cfg.sigma > 0.0 {
        // Confirms every closed-form point is a zero of the field.
        gauss_equilibria(cfg.alpha, cfg.theta, cfg.sigma)?;
    } else if cfg.sigma < 0.0 || !cfg.sigma.is_finite() {
        return Err(Error::invalid("sigma", ">= 0").into());
    }
    let mut reports = Vec::new();
    for label in EquilibriumLabel::ALL {
        match spectrum_at(label, cfg.alpha, cfg.theta, cfg.sigma) {
            Ok(r) => reports.push(spectrum_json(&r)),
            // Equilibria that do not exist at this sigma are left out.
            Err(Error::Domain(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    out.write_json("spectrum.json", &reports)
}

fn sigma_c(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let scan = ScanConfig { lo: cfg.scan_lo, hi: cfg.scan_hi, points: cfg.scan_points, ..ScanConfig::sigma_c_default() };
    let label: EquilibriumLabel = cfg.label.into();
    let c = find_sigma_c(cfg.alpha, cfg.theta, label, &scan)?;
    out.write_json(
        "sigma_c.json",
        &json!({
            "alpha": cfg.alpha,
            "theta": cfg.theta,
            "label": label,
            "sigma_c": c.sigma,
            "eigenvalue": [c.eigenvalue.re, c.eigenvalue.im],
            "destabilizing": c.destabilizing,
            "slope_on_hopf_line": excitability_slope(cfg.alpha),
        }),
    )
}

fn density_table(d: &GridDensity) -> Table {
    let mut tab = Table::new(["x", "q"]);
    for (x, q) in d.spec.centers().into_iter().zip(&d.q) {
        tab.push(vec![x, *q]);
    }
    tab
}

fn initial_density(cfg: &RunConfig, spec: GridSpec) -> Result<GridDensity, Error> {
    let spec = spec.validate()?;
    let cell = |x: f64| {
        let j = ((x - spec.lo) / spec.width()).floor();
        if !(0.0..spec.n_cells as f64).contains(&j) {
            return Err(Error::invalid("x0", "inside the grid"));
        }
        Ok(j as usize)
    };
    match cfg.init {
        InitKind::Normal => {
            let (c, w) = (cfg.x0, cfg.init_sd);
            if !(w > 0.0) {
                return Err(Error::invalid("init_sd", "> 0"));
            }
            GridDensity::from_fn(spec, |x| (-(x - c) * (x - c) / (2.0 * w * w)).exp())
        }
        InitKind::Dirac => {
            let j = cell(cfg.x0)?;
            GridDensity::from_fn(spec, |x| if cell(x).ok() == Some(j) { 1.0 } else { 0.0 })
        }
        InitKind::Split => {
            let (a, b) = (cell(-1.0)?, cell(1.0)?);
            GridDensity::from_fn(spec, |x| {
                let k = cell(x).ok();
                if k == Some(a) || k == Some(b) { 1.0 } else { 0.0 }
            })
        }
    }
}

/// Densities at the dump times.
type Snapshots = Vec<(f64, GridDensity)>;

/// Evolves in segments ending at each dump time. Summary times are shifted
/// to absolute time; each segment's first record repeats the previous end
/// and is dropped.
fn fp_segments(
    cfg: &RunConfig,
    init: FpState,
    qstar: &GridDensity,
    dumps: &[f64],
) -> Result<(Vec<FpSummary>, Snapshots), CliError> {
    let p = cfg.params();
    let fc = FpConfig { max_peclet: MAX_PECLET, record_every: cfg.record_every };
    let mut summaries = vec![summarize(&init, qstar)];
    let mut snaps = Vec::new();
    let mut state = init;
    let mut now = 0.0;
    for &t in dumps {
        if t > now {
            let (next, tr) = evolve(&FpState { t: 0.0, ..state }, &p, t - now, &fc)?;
            summaries.extend(tr.records.into_iter().skip(1).map(|s| FpSummary { t: now + s.t, ..s }));
            state = next;
            now = t;
        }
        snaps.push((t, state.density.clone()));
    }
    Ok((summaries, snaps))
}

fn fokker_planck(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let spec = GridSpec { lo: cfg.grid_lo, hi: cfg.grid_hi, n_cells: cfg.n_cells };
    let st = stationary_density(cfg.sigma, spec)?;
    let residual = stationary_residual(cfg.sigma, spec)?;
    let mut dumps = cfg.dump_times.clone();
    if dumps.iter().any(|t| !(*t >= 0.0 && *t <= cfg.t_end)) {
        return Err(Error::invalid("dump_times", "within [0, t_end]").into());
    }
    if dumps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("dump_times", "strictly increasing").into());
    }
    if dumps.last() != Some(&cfg.t_end) {
        dumps.push(cfg.t_end);
    }
    let init = FpState { density: initial_density(cfg, spec)?, mu: cfg.mu0, t: 0.0 };
    let (summaries, snaps) = fp_segments(cfg, init, &st.density, &dumps)?;

    out.write_table("fp_stationary", &density_table(&st.density), cfg.format)?;
    out.write_json(
        "fp_stationary.json",
        &json!({
            "sigma": cfg.sigma,
            "z_star": st.z_star,
            "tail_mass": st.tail_mass,
            "residual": residual,
            "n_cells": cfg.n_cells,
        }),
    )?;
    for (t, d) in &snaps {
        out.write_table(&format!("fp_density_t{t}"), &density_table(d), cfg.format)?;
    }
    out.write_json("fp_summary.json", &summaries)
}

fn picard_config(cfg: &RunConfig) -> PicardConfig {
    PicardConfig {
        n_iter: cfg.picard_iter,
        n_samples: cfg.n_samples,
        tol: cfg.picard_tol,
        rule: cfg.kernel.into(),
        ..Default::default()
    }
}

fn rate_table(name: &str, fit: &RateFit) -> Table {
    let mut tab = Table::new([name, "error", "stderr"]);
    for i in 0..fit.abscissae.len() {
        tab.push(vec![fit.abscissae[i], fit.errors[i], fit.stderrs[i]]);
    }
    tab
}

/// Writes a fit even when it failed its quality gate, then passes the
/// error on.
fn write_fit<T: Serialize>(
    out: &mut OutDir,
    stem: &str,
    column: &str,
    format: crate::config::Format,
    fit: &RateFit,
    report: &T,
) -> Result<(), CliError> {
    out.write_table(stem, &rate_table(column, fit), format)?;
    out.write_json(&format!("{stem}.json"), report)
}

fn chaos_rate<E: Executor>(cfg: &RunConfig, out: &mut OutDir, exec: &E) -> Result<(), CliError> {
    let cc = ChaosConfig {
        picard: picard_config(cfg),
        warm_start_samples: (cfg.warm_start_samples > 0).then_some(cfg.warm_start_samples),
        n_replicas: cfg.n_replicas,
    };
    let stem = "chaos_rate";
    let format = cfg.format;
    match chaos_rate_experiment(&cfg.params(), &cfg.init_law(), cfg.mu0, &cfg.n_grid, &cc, exec) {
        Ok(r) => write_fit(out, stem, "N", format, &r.fit, &r.fit),
        Err(Error::FitInconclusive { fit }) => {
            write_fit(out, stem, "N", format, &fit, &fit)?;
            Err(Error::FitInconclusive { fit }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct GaussErrorJson<'a> {
    #[serde(flatten)]
    fit: &'a RateFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    remainder_sup: Option<&'a [f64]>,
}

fn gauss_error<E: Executor>(cfg: &RunConfig, out: &mut OutDir, exec: &E) -> Result<(), CliError> {
    let gc = GaussErrorConfig { picard: picard_config(cfg), scheme: cfg.scheme.into() };
    let stem = "gauss_error";
    let format = cfg.format;
    match gaussian_error_experiment(&cfg.params(), cfg.x0, cfg.mu0, &cfg.sigma_grid, &gc, exec) {
        Ok(r) => {
            let j = GaussErrorJson { fit: &r.fit, remainder_sup: Some(&r.remainder_sup) };
            write_fit(out, stem, "sigma", format, &r.fit, &j)
        }
        Err(Error::FitInconclusive { fit }) => {
            write_fit(out, stem, "sigma", format, &fit, &GaussErrorJson { fit: &fit, remainder_sup: None })?;
            Err(Error::FitInconclusive { fit }.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes the CSVs behind the three figures and an index `figures.json`.
///
/// 1. Particle runs below the Hopf line at a small and a large noise level.
/// 2. A closed-moment path next to the deterministic limit cycle.
/// 3. Closed-moment paths near and far from s5 at large noise.
fn reproduce_figures(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let fmt = cfg.format;
    let base = cfg.params();

    let mut fig1 = Vec::new();
    for &sigma in &cfg.fig1_sigmas {
        let p = ModelParams { theta: cfg.fig1_theta, sigma, ..base };
        let split = RunConfig { init: InitKind::Split, record_particles: false, ..cfg.clone() };
        let (means, _) = particle_tables(&split, &p)?;
        fig1.push(json!({ "sigma": sigma, "file": out.write_table(&format!("fig1_sigma{sigma}"), &means, fmt)? }));
    }

    let p2 = ModelParams { theta: cfg.fig2_theta, sigma: cfg.fig2_sigma, ..base };
    let path2 = out.write_table("fig2_gauss", &gauss_run(cfg, &p2, (cfg.x0, cfg.mu0), 2)?, fmt)?;
    let cycle = detect_limit_cycle(MacroState::new(3.0, 0.0), cfg.alpha, cfg.fig2_theta, &cycle_config(cfg))?
        .ok_or_else(|| Error::Inconclusive(format!("no limit cycle at theta = {}", cfg.fig2_theta)))?;
    let h = cfg.cycle_dt.min(cycle.period / 200.0);
    let one_period = integrate_strided(cycle.section_point, cfg.alpha, cfg.fig2_theta, cycle.period, h, 1)?;
    let cycle2 = out.write_table("fig2_cycle", &macro_table(&one_period), fmt)?;

    let p3 = ModelParams { theta: cfg.fig3_theta, sigma: cfg.fig3_sigma, ..base };
    let mut fig3 = Vec::new();
    for (k, &m0) in cfg.fig3_m0s.iter().enumerate() {
        let tab = gauss_run(cfg, &p3, (m0, 0.0), 3 + k as u64)?;
        fig3.push(json!({ "m0": m0, "file": out.write_table(&format!("fig3_m0_{m0}"), &tab, fmt)? }));
    }
    let s5 = gauss_equilibrium(EquilibriumLabel::S5, cfg.fig3_sigma)?;

    out.write_json(
        "figures.json",
        &json!({
            "fig1": { "alpha": cfg.alpha, "theta": cfg.fig1_theta, "n_particles": cfg.n_particles, "runs": fig1 },
            "fig2": {
                "alpha": cfg.alpha, "theta": cfg.fig2_theta, "sigma": cfg.fig2_sigma,
                "path": path2, "cycle": cycle2, "period": cycle.period,
            },
            "fig3": { "alpha": cfg.alpha, "theta": cfg.fig3_theta, "sigma": cfg.fig3_sigma, "runs": fig3, "s5": state_json(s5) },
        }),
    )
}
