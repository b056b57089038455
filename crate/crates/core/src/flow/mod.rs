//! Noiseless macroscopic dynamics in the (x, mu) plane.

mod cycle;
mod phase;

pub use cycle::{
    detect_limit_cycle, detect_unstable_cycle, find_attractor, Attractor, CycleConfig,
    CycleRecord, Direction, Equilibrium,
};
pub use phase::{
    classify_phase, find_theta1, find_theta1_from, initial_grid, Phase, PhaseConfig, PhaseReport,
};

use alloc::format;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::trajectory::Trajectory;

/// Bound on |x| and |mu| beyond which an integration is declared failed.
pub const FLOW_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MacroState {
    pub x: f64,
    pub mu: f64,
}

impl MacroState {
    pub const fn new(x: f64, mu: f64) -> Self {
        MacroState { x, mu }
    }

    pub fn dist(&self, o: &MacroState) -> f64 {
        libm::hypot(self.x - o.x, self.mu - o.mu)
    }
}

/// `(dx/dt, dmu/dt)`. The mu rate is composed as `-alpha mu - theta dx/dt`,
/// which expands to `-(alpha - theta) mu + theta (x^3 - x)`.
#[inline]
pub fn vector_field(s: MacroState, alpha: f64, theta: f64) -> (f64, f64) {
    let dx = -s.x * s.x * s.x + s.x - s.mu;
    (dx, -alpha * s.mu - theta * dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StabilityTag {
    Saddle,
    Stable,
    Unstable,
    CenterLike,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian2 {
    pub matrix: [[f64; 2]; 2],
    pub trace: f64,
    pub det: f64,
    pub eigenvalues: [Complex64; 2],
    pub tag: StabilityTag,
}

pub fn jacobian2(s: MacroState, alpha: f64, theta: f64) -> Jacobian2 {
    let a = -3.0 * s.x * s.x + 1.0;
    let matrix = [[a, -1.0], [-theta * a, theta - alpha]];
    let trace = a + (theta - alpha);
    let det = a * (theta - alpha) - theta * a;
    let half = 0.5 * trace;
    let disc = half * half - det;
    let eigenvalues = if disc >= 0.0 {
        let r = libm::sqrt(disc);
        [Complex64::new(half + r, 0.0), Complex64::new(half - r, 0.0)]
    } else {
        let r = libm::sqrt(-disc);
        [Complex64::new(half, r), Complex64::new(half, -r)]
    };
    let tag = if det < 0.0 {
        StabilityTag::Saddle
    } else if trace < 0.0 {
        StabilityTag::Stable
    } else if trace > 0.0 {
        StabilityTag::Unstable
    } else {
        StabilityTag::CenterLike
    };
    Jacobian2 { matrix, trace, det, eigenvalues, tag }
}

/// One classical Runge-Kutta step. Negative `h` integrates backward.
#[inline]
pub fn rk4_step(s: MacroState, alpha: f64, theta: f64, h: f64) -> MacroState {
    let f = |s: MacroState| vector_field(s, alpha, theta);
    let add = |s: MacroState, k: (f64, f64), c: f64| MacroState::new(s.x + c * k.0, s.mu + c * k.1);
    let k1 = f(s);
    let k2 = f(add(s, k1, 0.5 * h));
    let k3 = f(add(s, k2, 0.5 * h));
    let k4 = f(add(s, k3, h));
    MacroState::new(
        s.x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        s.mu + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// RK4 trajectory recorded every step.
pub fn integrate(
    init: MacroState,
    alpha: f64,
    theta: f64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory<MacroState>> {
    integrate_strided(init, alpha, theta, t_end, dt, 1)
}

/// RK4 trajectory recorded every `stride` steps.
pub fn integrate_strided(
    init: MacroState,
    alpha: f64,
    theta: f64,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory<MacroState>> {
    let meta = ModelParams { alpha, theta, sigma: 0.0, n_particles: 1, dt, t_end, seed: 0 }
        .validate()?;
    if stride == 0 {
        return Err(Error::invalid("stride", ">= 1"));
    }
    let mut traj = Trajectory::new(meta);
    let mut s = init;
    traj.push(0.0, s);
    for k in 1..=meta.n_steps() {
        s = rk4_step(s, alpha, theta, dt);
        let t = meta.time(k);
        if !(s.x.abs() <= FLOW_GUARD && s.mu.abs() <= FLOW_GUARD) {
            return Err(Error::IntegratorFailure {
                t,
                reason: format!("state ({}, {}) left the bounded region", s.x, s.mu),
            });
        }
        if k % stride == 0 {
            traj.push(t, s);
        }
    }
    Ok(traj)
}

/// `W = x^2/2 + (theta x + mu)^2 / (2 alpha theta)` and its rate along the flow.
pub fn lyapunov_w(s: MacroState, alpha: f64, theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("W is undefined for theta = {theta}")));
    }
    let u = theta * s.x + s.mu;
    let x2 = s.x * s.x;
    let w = 0.5 * x2 + u * u / (2.0 * alpha * theta);
    let dw = -x2 * x2 + (1.0 + theta) * x2 - u * u / theta;
    Ok((w, dw))
}
