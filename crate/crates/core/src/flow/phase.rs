//! Homoclinic threshold search and phase classification.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::cycle::{find_attractor, Attractor, CycleConfig, CycleRecord, Direction, Equilibrium};
use super::{detect_limit_cycle, detect_unstable_cycle, jacobian2, MacroState, StabilityTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Phase {
    FixedPoints,
    Coexistence,
    PeriodicOrbit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub cycle: CycleConfig,
    pub theta1_tol: f64,
    /// Start of the orbit used by the threshold indicator.
    pub far_point: MacroState,
    /// Side of the square grid of initial conditions.
    pub grid_n: usize,
    pub grid_half_width: f64,
    /// Offset from (+-1, 0) where backward integration starts.
    pub inner_offset: f64,
    /// Relative period agreement required between detected outer cycles.
    pub period_rel_tol: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            cycle: CycleConfig::default(),
            theta1_tol: 1e-3,
            far_point: MacroState::new(3.0, 0.0),
            grid_n: 5,
            grid_half_width: 2.4,
            inner_offset: 1e-3,
            period_rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub alpha: f64,
    pub theta: f64,
    pub theta1: f64,
    pub hopf: f64,
    pub phase: Phase,
    pub cycles: Vec<CycleRecord>,
    pub grid: Vec<(MacroState, Attractor)>,
}

fn has_outer_cycle(alpha: f64, theta: f64, far: MacroState, cfg: &CycleConfig) -> Result<bool> {
    detect_limit_cycle(far, alpha, theta, cfg)
        .map(|c| c.is_some())
        .map_err(|e| match e {
            Error::Inconclusive(m) => Error::Inconclusive(format!("threshold indicator: {m}")),
            other => other,
        })
}

/// Smallest theta in (0, alpha + 2) at which an orbit from `far` (default
/// (3, 0)) is captured by a limit cycle, located by bisection to `tol`.
pub fn find_theta1(alpha: f64, tol: f64, cfg: &CycleConfig) -> Result<f64> {
    find_theta1_from(alpha, tol, cfg, PhaseConfig::default().far_point)
}

pub fn find_theta1_from(alpha: f64, tol: f64, cfg: &CycleConfig, far: MacroState) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", "> 0"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "> 0"));
    }
    let (mut lo, mut hi) = (0.0, alpha + 2.0);
    if has_outer_cycle(alpha, lo, far, cfg)? {
        return Err(Error::NotMonotone(format!("a cycle is detected at theta = {lo}")));
    }
    if !has_outer_cycle(alpha, hi, far, cfg)? {
        return Err(Error::NotMonotone(format!("no cycle is detected at theta = {hi}")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if has_outer_cycle(alpha, mid, far, cfg)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn grid(cfg: &PhaseConfig) -> Vec<MacroState> {
    let n = cfg.grid_n.max(1);
    let w = cfg.grid_half_width;
    let step = if n > 1 { 2.0 * w / (n - 1) as f64 } else { 0.0 };
    // Small offsets keep grid points off the equilibria and the symmetry axes.
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push(MacroState::new(-w + step * i as f64 + 0.05, -w + step * j as f64 + 0.03));
        }
    }
    pts
}

/// Grid of initial conditions used by [`classify_phase`].
pub fn initial_grid(cfg: &PhaseConfig) -> Vec<MacroState> {
    grid(cfg)
}

/// Classifies `theta` against the measured threshold and the Hopf value
/// `alpha + 2`, then checks the predicted attractors from a grid of
/// initial conditions. Any contradiction is reported as an error.
pub fn classify_phase(alpha: f64, theta: f64, cfg: &PhaseConfig) -> Result<PhaseReport> {
    let theta1 = find_theta1_from(alpha, cfg.theta1_tol, &cfg.cycle, cfg.far_point)?;
    let hopf = alpha + 2.0;
    let phase = if theta < theta1 {
        Phase::FixedPoints
    } else if theta < hopf {
        Phase::Coexistence
    } else {
        Phase::PeriodicOrbit
    };

    let mut grid_out = Vec::new();
    for p in grid(cfg) {
        grid_out.push((p, find_attractor(p, alpha, theta, &cfg.cycle, Direction::Forward)?));
    }
    let mut cycles = Vec::new();
    let mut problems: Vec<String> = Vec::new();

    let outer = detect_limit_cycle(cfg.far_point, alpha, theta, &cfg.cycle)?;
    let same_period = |c: &CycleRecord, o: &Option<CycleRecord>| {
        o.as_ref().is_some_and(|o| (c.period - o.period).abs() <= cfg.period_rel_tol * o.period)
    };
    match phase {
        Phase::FixedPoints => {
            if let Some(c) = &outer {
                problems.push(format!("cycle of period {} found from the far point", c.period));
            }
            for (p, a) in &grid_out {
                if let Attractor::Cycle(c) = a {
                    problems.push(format!("cycle of period {} from ({}, {})", c.period, p.x, p.mu));
                }
            }
        }
        Phase::Coexistence | Phase::PeriodicOrbit => {
            match &outer {
                Some(c) if c.surrounds_all() => cycles.push(c.clone()),
                Some(_) => problems.push("outer cycle does not surround all equilibria".into()),
                None => problems.push("no outer cycle from the far point".into()),
            }
            for (p, a) in &grid_out {
                match a {
                    Attractor::Cycle(c) if !same_period(c, &outer) => problems.push(format!(
                        "cycle of period {} from ({}, {}) differs from the outer cycle",
                        c.period, p.x, p.mu
                    )),
                    Attractor::Equilibrium(e) if phase == Phase::PeriodicOrbit => problems.push(
                        format!("({}, {}) converged to {:?}", p.x, p.mu, e),
                    ),
                    _ => {}
                }
            }
            let j = jacobian2(Equilibrium::Plus.point(), alpha, theta);
            if phase == Phase::Coexistence {
                if j.tag != StabilityTag::Stable {
                    problems.push("(+-1, 0) are not linearly stable".into());
                }
                for sign in [1.0, -1.0] {
                    let start = MacroState::new(sign * (1.0 + cfg.inner_offset), 0.0);
                    match detect_unstable_cycle(start, alpha, theta, &cfg.cycle)? {
                        Some(c) => cycles.push(c),
                        None => problems.push(format!(
                            "no unstable cycle found backward from ({}, 0)",
                            start.x
                        )),
                    }
                }
            } else if j.tag == StabilityTag::Stable {
                problems.push("(+-1, 0) are still linearly stable".into());
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::VerificationFailure(format!(
            "alpha = {alpha}, theta = {theta} classified {phase:?} (theta1 = {theta1}): {}",
            problems.join("; ")
        )));
    }
    Ok(PhaseReport { alpha, theta, theta1, hopf, phase, cycles, grid: grid_out })
}
