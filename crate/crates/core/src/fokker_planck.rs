//! Finite-volume solver for the nonlinear Fokker-Planck system
//!
//! ```text
//! dq/dt = (sigma^2/2) q'' - ((-x^3 + x - mu) q)'
//! dmu/dt = -(alpha - theta) mu - theta <-x^3 + x, q>
//! ```
//!
//! Fluxes use Scharfetter-Gummel (Chang-Cooper) weights, which keep the
//! implicit matrix an M-matrix. Each step solves for q implicitly with the
//! drift frozen at the current mu, then advances mu explicitly. The linear
//! solve eliminates from both ends toward the middle so that reflecting
//! the state commutes exactly with a step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::particle::drift;
use crate::quad::adaptive_simpson;
use crate::stats::pairwise_sum;
use crate::trajectory::Trajectory;

/// Largest cell Peclet number accepted by [`evolve`].
pub const MAX_PECLET: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: -4.0, hi: 4.0, n_cells: 400 }
    }
}

impl GridSpec {
    pub fn validate(self) -> Result<Self> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < 0.0 && 0.0 < self.hi) {
            return Err(Error::invalid("grid", "lo < 0 < hi"));
        }
        if self.n_cells < 2 {
            return Err(Error::invalid("n_cells", ">= 2"));
        }
        Ok(self)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_cells as f64
    }

    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Center of cell `j`. On a domain symmetric about 0 the centers are
    /// exactly antisymmetric.
    pub fn center(&self, j: usize) -> f64 {
        self.mid() + (j as f64 + 0.5 - 0.5 * self.n_cells as f64) * self.width()
    }

    /// Interface between cells `j` and `j + 1`.
    pub fn interface(&self, j: usize) -> f64 {
        self.mid() + (j as f64 + 1.0 - 0.5 * self.n_cells as f64) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }
}

/// Cell-averaged density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub spec: GridSpec,
    pub q: Vec<f64>,
    pub mass: f64,
}

impl GridDensity {
    pub fn new(spec: GridSpec, q: Vec<f64>) -> Result<Self> {
        let spec = spec.validate()?;
        if q.len() != spec.n_cells {
            return Err(Error::invalid("q", "one value per cell"));
        }
        if !q.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid("q", "finite and non-negative"));
        }
        let mass = pairing(&spec, &q, |_| 1.0);
        Ok(GridDensity { spec, q, mass })
    }

    /// Samples `f` at the cell centers and normalizes to unit mass.
    pub fn from_fn<F: Fn(f64) -> f64>(spec: GridSpec, f: F) -> Result<Self> {
        let spec = spec.validate()?;
        let raw: Vec<f64> = spec.centers().into_iter().map(f).collect();
        let d = GridDensity::new(spec, raw)?;
        let m = d.mass;
        if !(m > 0.0) {
            return Err(Error::invalid("density", "positive mass"));
        }
        GridDensity::new(spec, d.q.iter().map(|v| v / m).collect())
    }

    /// `h sum g(x_j) q_j`.
    pub fn pair<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        pairing(&self.spec, &self.q, g)
    }

    pub fn l1_distance(&self, other: &GridDensity) -> f64 {
        let d: Vec<f64> = self.q.iter().zip(&other.q).map(|(a, b)| (a - b).abs()).collect();
        self.spec.width() * pairwise_sum(&d)
    }

    /// Mirror image under x -> -x (for domains symmetric about 0).
    pub fn reflected(&self) -> GridDensity {
        let mut q = self.q.clone();
        q.reverse();
        GridDensity { spec: self.spec, q, mass: self.mass }
    }
}

/// Quadrature pairing summed over mirror pairs (j, n-1-j), so an odd `g`
/// against an even density gives exactly 0.
fn pairing<G: Fn(f64) -> f64>(spec: &GridSpec, q: &[f64], g: G) -> f64 {
    let n = q.len();
    let mut terms: Vec<f64> = (0..n / 2)
        .map(|j| {
            let k = n - 1 - j;
            g(spec.center(j)) * q[j] + g(spec.center(k)) * q[k]
        })
        .collect();
    if n % 2 == 1 {
        terms.push(g(spec.center(n / 2)) * q[n / 2]);
    }
    spec.width() * pairwise_sum(&terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub density: GridDensity,
    pub mu: f64,
    pub t: f64,
}

impl FpState {
    pub fn reflected(&self) -> FpState {
        FpState { density: self.density.reflected(), mu: -self.mu, t: self.t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub density: GridDensity,
    pub z_star: f64,
    /// Mass of the exact profile outside the grid.
    pub tail_mass: f64,
}

fn log_profile(x: f64, sigma: f64) -> f64 {
    let x2 = x * x;
    (-0.5 * x2 * x2 + x2) / (sigma * sigma)
}

/// `q*(x) = exp((-x^4/2 + x^2) / sigma^2) / Z*` at the cell centers.
///
/// The exponent is shifted by its maximum `1/(2 sigma^2)` before exponentiation
/// so nothing overflows for small sigma.
pub fn stationary_density(sigma: f64, spec: GridSpec) -> Result<Stationary> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", "> 0"));
    }
    let spec = spec.validate()?;
    let peak = 0.5 / (sigma * sigma);
    let g = |x: f64| libm::exp(log_profile(x, sigma) - peak);
    // The profile is below e^-40 of its peak beyond this point.
    let mut reach: f64 = 2.0;
    while log_profile(reach, sigma) - peak > -40.0 {
        reach *= 1.25;
    }
    // Split at the peaks and the saddle so narrow profiles are never skipped.
    let integrate = |lo: f64, hi: f64, tol: f64| -> f64 {
        let mut cuts = vec![lo];
        cuts.extend([-1.0, 0.0, 1.0].into_iter().filter(|&c| c > lo && c < hi));
        cuts.push(hi);
        cuts.windows(2).map(|w| adaptive_simpson(&g, w[0], w[1], tol)).sum()
    };
    let rough = integrate(-reach, reach, 1e-6);
    let scaled = integrate(-reach, reach, 1e-12 * rough);
    let z_star = scaled * libm::exp(peak);
    let inside = integrate(spec.lo, spec.hi, 1e-12 * rough);
    let tail_mass = ((scaled - inside) / scaled).max(0.0);
    let q = spec.centers().into_iter().map(|x| g(x) / scaled).collect();
    Ok(Stationary { density: GridDensity::new(spec, q)?, z_star, tail_mass })
}

/// Bernoulli function `w / (e^w - 1)`.
#[inline]
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-8 {
        1.0 - 0.5 * w
    } else {
        w / libm::expm1(w)
    }
}

/// Interface weights: flux `F_j = a_j q_j - c_j q_{j+1}` for `j < n - 1`.
fn flux_weights(spec: &GridSpec, sigma: f64, mu: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let n = spec.n_cells;
    let h = spec.width();
    let d = 0.5 * sigma * sigma;
    let mut a = vec![0.0; n - 1];
    let mut c = vec![0.0; n - 1];
    let mut peclet: f64 = 0.0;
    for j in 0..n - 1 {
        let b = drift(spec.interface(j)) - mu;
        let w = b * h / d;
        peclet = peclet.max(w.abs());
        a[j] = d / h * bernoulli(-w);
        c[j] = d / h * bernoulli(w);
    }
    (a, c, peclet)
}

/// Discrete operator `(L q)_j = -(F_{j+1/2} - F_{j-1/2}) / h`.
pub fn apply_operator(spec: &GridSpec, q: &[f64], sigma: f64, mu: f64) -> Vec<f64> {
    let n = spec.n_cells;
    let h = spec.width();
    let (a, c, _) = flux_weights(spec, sigma, mu);
    let flux = |j: usize| a[j] * q[j] - c[j] * q[j + 1];
    (0..n)
        .map(|j| {
            let right = if j + 1 < n { flux(j) } else { 0.0 };
            let left = if j > 0 { flux(j - 1) } else { 0.0 };
            -(right - left) / h
        })
        .collect()
}

/// Max-norm of the discrete operator applied to the sampled q* with the
/// given mu (mu = 0 is the stationary value).
pub fn stationary_residual_with_mu(sigma: f64, spec: GridSpec, mu: f64) -> Result<f64> {
    let st = stationary_density(sigma, spec)?;
    let r = apply_operator(&st.density.spec, &st.density.q, sigma, mu);
    Ok(r.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

pub fn stationary_residual(sigma: f64, spec: GridSpec) -> Result<f64> {
    stationary_residual_with_mu(sigma, spec, 0.0)
}

/// Solves the tridiagonal system `sub_j q_{j-1} + diag_j q_j + sup_j q_{j+1} = r_j`
/// by eliminating from both ends and meeting in the middle.
fn twisted_solve(sub: &[f64], diag: &[f64], sup: &[f64], r: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut dt = diag.to_vec();
    let mut rt = r.to_vec();
    let mut db = diag.to_vec();
    let mut rb = r.to_vec();
    let mut q = vec![0.0; n];
    let (top_end, bottom_start) = if n.is_multiple_of(2) { (n / 2 - 1, n / 2) } else { (n / 2 - 1, n / 2 + 1) };
    for i in 1..=top_end {
        let f = sub[i] / dt[i - 1];
        dt[i] = diag[i] - f * sup[i - 1];
        rt[i] = r[i] - f * rt[i - 1];
    }
    for i in (bottom_start..n - 1).rev() {
        let g = sup[i] / db[i + 1];
        db[i] = diag[i] - g * sub[i + 1];
        rb[i] = r[i] - g * rb[i + 1];
    }
    if n.is_multiple_of(2) {
        let (k, l) = (top_end, bottom_start);
        let det = dt[k] * db[l] - sup[k] * sub[l];
        q[k] = (rt[k] * db[l] - sup[k] * rb[l]) / det;
        q[l] = (dt[k] * rb[l] - sub[l] * rt[k]) / det;
    } else {
        let m = n / 2;
        let (u, v) = (sub[m] / dt[m - 1], sup[m] / db[m + 1]);
        let d = diag[m] - (u * sup[m - 1] + v * sub[m + 1]);
        q[m] = (r[m] - (u * rt[m - 1] + v * rb[m + 1])) / d;
    }
    let (first_top, last_bottom) =
        if n.is_multiple_of(2) { (top_end, bottom_start) } else { (n / 2, n / 2) };
    for i in (0..first_top).rev() {
        q[i] = (rt[i] - sup[i] * q[i + 1]) / dt[i];
    }
    for i in last_bottom + 1..n {
        q[i] = (rb[i] - sub[i] * q[i - 1]) / db[i];
    }
    q
}

/// One step: implicit in q with mu frozen, then explicit Euler in mu.
pub fn step(state: &FpState, params: &ModelParams, max_peclet: f64) -> Result<FpState> {
    let spec = state.density.spec;
    let n = spec.n_cells;
    let h = spec.width();
    let dt = params.dt;
    let (a, c, peclet) = flux_weights(&spec, params.sigma, state.mu);
    if peclet > max_peclet {
        return Err(Error::Peclet { peclet, limit: max_peclet });
    }
    let k = dt / h;
    let mut sub = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut sup = vec![0.0; n];
    for j in 0..n {
        let out_right = if j + 1 < n { a[j] } else { 0.0 };
        let out_left = if j > 0 { c[j - 1] } else { 0.0 };
        diag[j] = 1.0 + k * (out_right + out_left);
        if j > 0 {
            sub[j] = -k * a[j - 1];
        }
        if j + 1 < n {
            sup[j] = -k * c[j];
        }
    }
    let q = twisted_solve(&sub, &diag, &sup, &state.density.q);
    let pair = state.density.pair(drift);
    let mu = state.mu + dt * (-(params.alpha - params.theta) * state.mu - params.theta * pair);
    let mass = pairing(&spec, &q, |_| 1.0);
    Ok(FpState { density: GridDensity { spec, q, mass }, mu, t: state.t + dt })
}

/// Diagnostics recorded along an evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FpSummary {
    pub t: f64,
    pub mass: f64,
    pub mu: f64,
    pub m1: f64,
    pub m2: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L1_dist_to_qstar"))]
    pub l1_dist_to_qstar: f64,
}

pub fn summarize(state: &FpState, qstar: &GridDensity) -> FpSummary {
    FpSummary {
        t: state.t,
        mass: state.density.mass,
        mu: state.mu,
        m1: state.density.pair(|x| x),
        m2: state.density.pair(|x| x * x),
        l1_dist_to_qstar: state.density.l1_distance(qstar),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpConfig {
    pub max_peclet: f64,
    /// Steps between recorded summaries.
    pub record_every: usize,
}

impl Default for FpConfig {
    fn default() -> Self {
        FpConfig { max_peclet: MAX_PECLET, record_every: 100 }
    }
}

/// Evolves `init` to `t_end` with step `params.dt`. Returns the final state
/// and the recorded summaries (first and last step always included).
pub fn evolve(
    init: &FpState,
    params: &ModelParams,
    t_end: f64,
    cfg: &FpConfig,
) -> Result<(FpState, Trajectory<FpSummary>)> {
    let p = ModelParams { t_end, ..*params }.validate()?;
    if !(p.sigma > 0.0) {
        return Err(Error::invalid("sigma", "> 0 for the Fokker-Planck solver"));
    }
    if (init.density.mass - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("initial density", "normalized to unit mass"));
    }
    let (_, _, peclet) = flux_weights(&init.density.spec, p.sigma, init.mu);
    if peclet > cfg.max_peclet {
        return Err(Error::Peclet { peclet, limit: cfg.max_peclet });
    }
    let qstar = stationary_density(p.sigma, init.density.spec)?.density;
    let every = cfg.record_every.max(1);
    let mut traj = Trajectory::new(p);
    let mut s = FpState { t: 0.0, ..init.clone() };
    traj.push(0.0, summarize(&s, &qstar));
    let n = p.n_steps();
    for k in 1..=n {
        s = step(&s, &p, cfg.max_peclet)?;
        s.t = p.time(k);
        if k % every == 0 || k == n {
            traj.push(s.t, summarize(&s, &qstar));
        }
    }
    Ok((s, traj))
}
