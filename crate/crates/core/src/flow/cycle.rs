//! Attractor detection on the Poincare section {mu = 0}.
//!
//! Crossings are taken with mu increasing in the direction of integration
//! and located by cubic Hermite interpolation inside the RK4 step.

use alloc::format;
use alloc::vec::Vec;

use super::{rk4_step, vector_field, MacroState};
use crate::error::{Error, Result};

/// How many earlier crossings a new crossing is compared against. Orbits
/// with several upward crossings per period close against an older one.
const SECTION_MEMORY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    pub dt: f64,
    pub transient: f64,
    pub horizon: f64,
    pub equilibrium_tol: f64,
    pub cycle_tol: f64,
    /// A closure also needs `defect <= min_closure_ratio * amplitude`;
    /// this keeps a slowly converging focus from passing as a cycle.
    pub min_closure_ratio: f64,
    pub escape_radius: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            dt: 1e-2,
            transient: 100.0,
            horizon: 1e4,
            equilibrium_tol: 1e-8,
            cycle_tol: 1e-6,
            min_closure_ratio: 1e-4,
            escape_radius: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Equilibrium {
    Minus,
    Origin,
    Plus,
}

impl Equilibrium {
    pub const ALL: [Equilibrium; 3] = [Equilibrium::Minus, Equilibrium::Origin, Equilibrium::Plus];

    pub fn point(self) -> MacroState {
        match self {
            Equilibrium::Minus => MacroState::new(-1.0, 0.0),
            Equilibrium::Origin => MacroState::new(0.0, 0.0),
            Equilibrium::Plus => MacroState::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleRecord {
    pub period: f64,
    pub section_point: MacroState,
    pub amplitude: f64,
    pub stable: bool,
    pub surrounds: Vec<Equilibrium>,
    pub closure_defect: f64,
    pub x_range: (f64, f64),
    pub mu_range: (f64, f64),
}

impl CycleRecord {
    pub fn surrounds_all(&self) -> bool {
        self.surrounds.len() == 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Attractor {
    Equilibrium(Equilibrium),
    Cycle(CycleRecord),
}

struct Crossing {
    t: f64,
    x: f64,
    /// Absolute index of the crossing point in the recorded orbit.
    at: usize,
}

/// Integrates until the orbit settles on an equilibrium or closes on the
/// section. Backward integration makes repelling cycles attracting.
pub fn find_attractor(
    init: MacroState,
    alpha: f64,
    theta: f64,
    cfg: &CycleConfig,
    direction: Direction,
) -> Result<Attractor> {
    let h = match direction {
        Direction::Forward => cfg.dt,
        Direction::Backward => -cfg.dt,
    };
    let n_transient = libm::ceil(cfg.transient / cfg.dt) as u64;
    let n_max = libm::ceil(cfg.horizon / cfg.dt) as u64;

    let mut s = init;
    let mut orbit: Vec<MacroState> = Vec::new();
    let mut crossings: Vec<Crossing> = Vec::new();
    let mut last_defect = f64::INFINITY;
    // Absolute index of orbit[0].
    let mut base = 0usize;

    for k in 1..=n_max {
        let next = rk4_step(s, alpha, theta, h);
        let t = k as f64 * cfg.dt;
        if !(next.x.abs() <= cfg.escape_radius && next.mu.abs() <= cfg.escape_radius) {
            return Err(Error::IntegratorFailure {
                t,
                reason: format!("orbit escaped radius {} ({:?} time)", cfg.escape_radius, direction),
            });
        }
        if k <= n_transient {
            s = next;
            continue;
        }
        for e in Equilibrium::ALL {
            if next.dist(&e.point()) < cfg.equilibrium_tol {
                return Ok(Attractor::Equilibrium(e));
            }
        }
        if s.mu < 0.0 && next.mu >= 0.0 {
            let (frac, p) = section_point(s, next, alpha, theta, h);
            let tc = t - cfg.dt + frac * cfg.dt;
            orbit.push(p);
            let here = base + orbit.len() - 1;
            for back in 1..=crossings.len().min(SECTION_MEMORY) {
                let prev = &crossings[crossings.len() - back];
                let defect = (p.x - prev.x).abs();
                if back == 1 {
                    last_defect = defect;
                }
                let loop_pts = &orbit[prev.at - base..=here - base];
                let (xr, mr) = ranges(loop_pts);
                let amplitude = xr.1 - xr.0;
                if defect < cfg.cycle_tol && defect <= cfg.min_closure_ratio * amplitude {
                    let surrounds = Equilibrium::ALL
                        .into_iter()
                        .filter(|e| winding_number(loop_pts, e.point()) != 0)
                        .collect();
                    return Ok(Attractor::Cycle(CycleRecord {
                        period: tc - prev.t,
                        section_point: p,
                        amplitude,
                        stable: direction == Direction::Forward,
                        surrounds,
                        closure_defect: defect,
                        x_range: xr,
                        mu_range: mr,
                    }));
                }
            }
            crossings.push(Crossing { t: tc, x: p.x, at: here });
            if crossings.len() > SECTION_MEMORY {
                crossings.remove(0);
                let cut = crossings[0].at - base;
                orbit.drain(..cut);
                base += cut;
            }
        }
        if !crossings.is_empty() {
            orbit.push(next);
        }
        s = next;
    }
    Err(Error::Inconclusive(format!(
        "alpha = {alpha}, theta = {theta}: no equilibrium or closed orbit within t = {} \
         from ({}, {}); last section defect {last_defect:e}",
        cfg.horizon, init.x, init.mu
    )))
}

/// Stable cycle reached forward in time from `init`, or `None` when the
/// orbit settles on an equilibrium.
pub fn detect_limit_cycle(
    init: MacroState,
    alpha: f64,
    theta: f64,
    cfg: &CycleConfig,
) -> Result<Option<CycleRecord>> {
    match find_attractor(init, alpha, theta, cfg, Direction::Forward)? {
        Attractor::Cycle(c) => Ok(Some(c)),
        Attractor::Equilibrium(_) => Ok(None),
    }
}

/// Unstable cycle reached backward in time from `init`. `None` when the
/// reversed orbit escapes or settles on an equilibrium.
pub fn detect_unstable_cycle(
    init: MacroState,
    alpha: f64,
    theta: f64,
    cfg: &CycleConfig,
) -> Result<Option<CycleRecord>> {
    match find_attractor(init, alpha, theta, cfg, Direction::Backward) {
        Ok(Attractor::Cycle(c)) => Ok(Some(c)),
        Ok(Attractor::Equilibrium(_)) | Err(Error::IntegratorFailure { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fraction of the step and the interpolated point where mu = 0.
fn section_point(
    a: MacroState,
    b: MacroState,
    alpha: f64,
    theta: f64,
    h: f64,
) -> (f64, MacroState) {
    let fa = vector_field(a, alpha, theta);
    let fb = vector_field(b, alpha, theta);
    let hermite = |p0: f64, m0: f64, p1: f64, m1: f64, s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1
    };
    let mu_at = |s| hermite(a.mu, h * fa.1, b.mu, h * fb.1, s);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mu_at(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, MacroState::new(hermite(a.x, h * fa.0, b.x, h * fb.0, s), 0.0))
}

fn ranges(pts: &[MacroState]) -> ((f64, f64), (f64, f64)) {
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut mr = xr;
    for p in pts {
        xr = (xr.0.min(p.x), xr.1.max(p.x));
        mr = (mr.0.min(p.mu), mr.1.max(p.mu));
    }
    (xr, mr)
}

/// Winding number of the closed polygon `pts` around `c`.
fn winding_number(pts: &[MacroState], c: MacroState) -> i32 {
    let mut total = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let a0 = libm::atan2(a.mu - c.mu, a.x - c.x);
        let a1 = libm::atan2(b.mu - c.mu, b.x - c.x);
        let mut d = a1 - a0;
        if d > core::f64::consts::PI {
            d -= 2.0 * core::f64::consts::PI;
        } else if d < -core::f64::consts::PI {
            d += 2.0 * core::f64::consts::PI;
        }
        total += d;
    }
    libm::round(total / (2.0 * core::f64::consts::PI)) as i32
}
