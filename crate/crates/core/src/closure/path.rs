use alloc::format;
use alloc::vec::Vec;

use super::{gauss_vector_field, GaussState};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::RngStream;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OdeScheme {
    #[default]
    Rk4,
    /// Forward Euler, with nu advanced as `nu - alpha nu dt - theta (m' - m)`
    /// so that it matches the particle update step for step.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPathConfig {
    pub scheme: OdeScheme,
    pub stride: usize,
    pub guard: f64,
}

impl Default for GaussPathConfig {
    fn default() -> Self {
        GaussPathConfig { scheme: OdeScheme::Rk4, stride: 1, guard: 1e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussRecord {
    pub m: f64,
    pub nu: f64,
    pub v: f64,
    pub z: f64,
    pub y: f64,
}

fn rk4(s: GaussState, a: f64, th: f64, sg: f64, h: f64) -> GaussState {
    let f = |s: GaussState| gauss_vector_field(s, a, th, sg);
    let add = |s: GaussState, k: (f64, f64, f64), c: f64| {
        GaussState::new(s.m + c * k.0, s.nu + c * k.1, s.v + c * k.2)
    };
    let k1 = f(s);
    let k2 = f(add(s, k1, 0.5 * h));
    let k3 = f(add(s, k2, 0.5 * h));
    let k4 = f(add(s, k3, h));
    let c = h / 6.0;
    GaussState::new(
        s.m + c * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        s.nu + c * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        s.v + c * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
    )
}

fn euler(s: GaussState, a: f64, th: f64, sg: f64, h: f64) -> GaussState {
    let (dm, _, dv) = gauss_vector_field(s, a, th, sg);
    let m = s.m + h * dm;
    GaussState::new(m, s.nu - a * s.nu * h - th * (m - s.m), s.v + h * dv)
}

fn check(s: &GaussState, t: f64, guard: f64) -> Result<()> {
    let worst = s.m.abs().max(s.nu.abs()).max(s.v.abs());
    if !(worst <= guard) {
        return Err(Error::Diverged { t, what: format!("(m, nu, V) = ({}, {}, {})", s.m, s.nu, s.v), guard });
    }
    Ok(())
}

/// Deterministic (m, nu, V) path on the step grid, `V(0) = 0`.
pub fn gauss_mean_path(
    init: (f64, f64),
    params: &ModelParams,
    scheme: OdeScheme,
    guard: f64,
) -> Result<Vec<GaussState>> {
    let p = params.validate()?;
    let n = p.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut s = GaussState::new(init.0, init.1, 0.0);
    out.push(s);
    for k in 1..=n {
        s = match scheme {
            OdeScheme::Rk4 => rk4(s, p.alpha, p.theta, p.sigma, p.dt),
            OdeScheme::Euler => euler(s, p.alpha, p.theta, p.sigma, p.dt),
        };
        check(&s, p.time(k), guard)?;
        out.push(s);
    }
    Ok(out)
}

/// Euler-Maruyama path of `dz = (1 - 3 m^2 - 3 sigma^2 V) z dt + dB`,
/// `z(0) = 0`, driven by the normals of `stream` (draw `k` for step `k`).
pub fn fluctuation_path(
    means: &[GaussState],
    params: &ModelParams,
    stream: &RngStream,
) -> Vec<f64> {
    let dt = params.dt;
    let sdt = libm::sqrt(dt);
    let s2 = params.sigma * params.sigma;
    let mut z = 0.0;
    let mut out = Vec::with_capacity(means.len());
    out.push(z);
    for (s, xi) in means.iter().zip(stream.normals()).take(means.len().saturating_sub(1)) {
        z += (1.0 - 3.0 * s.m * s.m - 3.0 * s2 * s.v) * z * dt + sdt * xi;
        out.push(z);
    }
    out
}

/// Co-integrates the closed moment system and one fluctuation path.
pub fn simulate_gauss_path(
    init: (f64, f64),
    params: &ModelParams,
    stream: &RngStream,
    cfg: &GaussPathConfig,
) -> Result<Trajectory<GaussRecord>> {
    let p = params.validate()?;
    if cfg.stride == 0 {
        return Err(Error::invalid("stride", ">= 1"));
    }
    let means = gauss_mean_path(init, &p, cfg.scheme, cfg.guard)?;
    let zs = fluctuation_path(&means, &p, stream);
    let mut traj = Trajectory::new(p);
    for (k, (s, &z)) in means.iter().zip(&zs).enumerate() {
        if !(z.abs() <= cfg.guard) {
            return Err(Error::Diverged { t: p.time(k), what: format!("z = {z}"), guard: cfg.guard });
        }
        if k % cfg.stride == 0 {
            traj.push(p.time(k), GaussRecord { m: s.m, nu: s.nu, v: s.v, z, y: s.m + p.sigma * z });
        }
    }
    Ok(traj)
}

/// Largest defects of the first and second moment equations along a path.
///
/// Moments of `y ~ N(m, sigma^2 V)` are inserted into
/// `d E[y]/dt = -E[y^3] + E[y] - nu` and
/// `d E[y^2]/dt = -2 E[y^4] + 2 E[y^2] + sigma^2 - 2 nu E[y]`,
/// with time derivatives taken as forward differences.
pub fn moment_residual(path: &Trajectory<GaussRecord>, params: &ModelParams) -> (f64, f64) {
    let s2 = params.sigma * params.sigma;
    let moments = |r: &GaussRecord| {
        let (m, v) = (r.m, r.v);
        let m2 = m * m + s2 * v;
        let m3 = m * m * m + 3.0 * s2 * m * v;
        let m4 = m * m * m * m + 6.0 * s2 * m * m * v + 3.0 * s2 * s2 * v * v;
        (m, m2, m3, m4)
    };
    let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
    for k in 0..path.len().saturating_sub(1) {
        let dt = path.times[k + 1] - path.times[k];
        let r = &path.records[k];
        let (a1, a2, a3, a4) = moments(r);
        let (b1, b2, _, _) = moments(&path.records[k + 1]);
        let rhs1 = -a3 + a1 - r.nu;
        let rhs2 = -2.0 * a4 + 2.0 * a2 + s2 - 2.0 * r.nu * a1;
        d1 = d1.max(((b1 - a1) / dt - rhs1).abs());
        d2 = d2.max(((b2 - a2) / dt - rhs2).abs());
    }
    (d1, d2)
}
