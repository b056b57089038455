//! Limit (McKean-Vlasov) dynamics through its mean path, and the two
//! convergence experiments built on it.
//!
//! The limit equation depends on its own law only through `mu(t)`, and
//! `u = mu + theta m` solves `u' = -alpha u + alpha theta m`. Given a guess
//! for `mu(.)`, an ensemble of frozen SDEs yields `m(.)`, which yields the
//! next `mu(.)` (Picard iteration). All iterations reuse the same random
//! numbers, and samples come in antithetic pairs: noise negated, initial
//! value reflected about the law's mean.

use alloc::vec;
use alloc::vec::Vec;

use crate::closure::{gauss_mean_path, OdeScheme};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::params::ModelParams;
use crate::particle::{drift, step_particles, DIVERGENCE_GUARD};
use crate::rng::{gaussian_draw, RngStream};
use crate::stats::{mean, pairwise_sum, std_error, RateFit};

const PICARD_NOISE: u64 = 0x4d56_0000_0000_0001;
const PICARD_INIT: u64 = 0x4d56_0000_0000_0002;
const CHAOS_NOISE: u64 = 0x4348_0000_0000_0000;
const CHAOS_INIT: u64 = 0x4349_0000_0000_0000;

/// Initial distributions. All are symmetric about their mean.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum InitLaw {
    Dirac { x: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `+a` or `-a` with probability 1/2 each.
    TwoPoint { a: f64 },
}

impl InitLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            InitLaw::Dirac { x } => x,
            InitLaw::Normal { mean, .. } => mean,
            InitLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            InitLaw::TwoPoint { .. } => 0.0,
        }
    }

    /// A draw and its reflection about the mean.
    pub fn sample_pair(&self, stream: &RngStream) -> (f64, f64) {
        match *self {
            InitLaw::Dirac { x } => (x, x),
            InitLaw::Normal { mean, sd } => {
                let d = sd * gaussian_draw(stream, 0);
                (mean + d, mean - d)
            }
            InitLaw::Uniform { lo, hi } => {
                let d = (hi - lo) * stream.uniform(0);
                (lo + d, hi - d)
            }
            InitLaw::TwoPoint { a } => {
                if stream.uniform(0) < 0.5 {
                    (a, -a)
                } else {
                    (-a, a)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitLaw::Dirac { x } => x.is_finite(),
            InitLaw::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            InitLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            InitLaw::TwoPoint { a } => a.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("init_law", "finite with non-negative spread"))
        }
    }
}

/// Quadrature for the exponential kernel in the mu update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelRule {
    /// Exact exponential factors, trapezoid rule for the kernel integral.
    #[default]
    Trapezoid,
    /// `mu_{k+1} = mu_k - alpha mu_k dt - theta (m_{k+1} - m_k)`, the
    /// discrete counterpart of the particle update.
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanPath {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub mu: Vec<f64>,
    /// `E[-x^3 + x]` on the same grid.
    pub mean_drift: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub n_iter: usize,
    pub n_samples: usize,
    pub tol: f64,
    pub antithetic: bool,
    pub rule: KernelRule,
    /// Sample units per work chunk. Fixed chunking keeps sums independent
    /// of the executor.
    pub chunk: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            n_iter: 30,
            n_samples: 100_000,
            tol: 1e-8,
            antithetic: true,
            rule: KernelRule::Trapezoid,
            chunk: 256,
        }
    }
}

impl PicardConfig {
    fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::invalid("n_iter", ">= 1"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples", ">= 2"));
        }
        if self.antithetic && self.n_samples % 2 == 1 {
            return Err(Error::invalid("n_samples", "even with antithetic pairing"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "> 0"));
        }
        if self.chunk == 0 {
            return Err(Error::invalid("chunk", ">= 1"));
        }
        Ok(())
    }

    fn units(&self) -> usize {
        if self.antithetic { self.n_samples / 2 } else { self.n_samples }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub path: MeanPath,
    /// `sup_t |mu_{n+1} - mu_n|` for every iteration performed.
    pub defects: Vec<f64>,
}

fn unit_streams(seed: u64, j: usize) -> (RngStream, RngStream) {
    (RngStream::new(seed, PICARD_INIT, j as u64), RngStream::new(seed, PICARD_NOISE, j as u64))
}

/// Starting values of unit `j` (one or two samples).
fn unit_start(law: &InitLaw, seed: u64, j: usize) -> (f64, f64) {
    law.sample_pair(&unit_streams(seed, j).0)
}

/// Sums of `x` and `-x^3 + x` over the ensemble on the step grid.
fn ensemble_sums<E: Executor>(
    law: &InitLaw,
    mu: &[f64],
    p: &ModelParams,
    cfg: &PicardConfig,
    exec: &E,
) -> (Vec<f64>, Vec<f64>) {
    let len = mu.len();
    let units = cfg.units();
    let n_chunks = units.div_ceil(cfg.chunk);
    let dt = p.dt;
    let kick = p.sigma * libm::sqrt(dt);
    let chunks = exec.map_indexed(n_chunks, |c| {
        let mut sx = vec![0.0; len];
        let mut sd = vec![0.0; len];
        for j in c * cfg.chunk..((c + 1) * cfg.chunk).min(units) {
            let (mut a, mut b) = unit_start(law, p.seed, j);
            let mut noise = unit_streams(p.seed, j).1.normals();
            for k in 0..len {
                let (fa, fb) = (drift(a), drift(b));
                if cfg.antithetic {
                    sx[k] += a + b;
                    sd[k] += fa + fb;
                } else {
                    sx[k] += a;
                    sd[k] += fa;
                }
                if k + 1 < len {
                    let xi = noise.next().unwrap_or(0.0);
                    a += (fa - mu[k]) * dt + kick * xi;
                    b += (fb - mu[k]) * dt - kick * xi;
                }
            }
        }
        (sx, sd)
    });
    let reduce = |k: usize, diff: bool| {
        let col: Vec<f64> = chunks.iter().map(|c| if diff { c.1[k] } else { c.0[k] }).collect();
        pairwise_sum(&col)
    };
    let sx = (0..len).map(|k| reduce(k, false)).collect();
    let sd = (0..len).map(|k| reduce(k, true)).collect();
    (sx, sd)
}

/// `mu` on the step grid implied by the mean path `m`.
pub fn mu_from_mean(m: &[f64], mu0: f64, p: &ModelParams, rule: KernelRule) -> Vec<f64> {
    let (a, th, dt) = (p.alpha, p.theta, p.dt);
    let mut out = Vec::with_capacity(m.len());
    let u0 = mu0 + th * m[0];
    match rule {
        KernelRule::Trapezoid => {
            let e = libm::exp(-a * dt);
            let mut integral = 0.0;
            for k in 0..m.len() {
                if k > 0 {
                    integral = e * integral + 0.5 * dt * (e * m[k - 1] + m[k]);
                }
                let decay = libm::exp(-a * p.time(k));
                // With theta = 0 this is exactly mu0 e^{-alpha t}.
                let u = decay * mu0 + th * (decay * m[0] + a * integral);
                out.push(u - th * m[k]);
            }
        }
        KernelRule::Euler => {
            let mut u = u0;
            for k in 0..m.len() {
                if k > 0 {
                    u = (1.0 - a * dt) * u + a * th * dt * m[k - 1];
                }
                out.push(u - th * m[k]);
            }
        }
    }
    out
}

/// Picard iteration for the limit mean path on `[0, t_end]`.
pub fn picard_solve<E: Executor>(
    law: &InitLaw,
    mu0: f64,
    params: &ModelParams,
    cfg: &PicardConfig,
    guess: Option<&[f64]>,
    exec: &E,
) -> Result<PicardResult> {
    let p = params.validate()?;
    cfg.validate()?;
    law.validate()?;
    let len = p.n_steps() + 1;
    let zero_coupling = ModelParams { theta: 0.0, ..p };
    let mut mu = match guess {
        Some(g) if g.len() == len => g.to_vec(),
        Some(_) => return Err(Error::invalid("initial mu guess", "one value per grid point")),
        None => mu_from_mean(&vec![0.0; len], mu0, &zero_coupling, cfg.rule),
    };
    let n = cfg.n_samples as f64;
    let mut defects = Vec::new();
    for _ in 0..cfg.n_iter {
        let (sx, sd) = ensemble_sums(law, &mu, &p, cfg, exec);
        let m: Vec<f64> = sx.iter().map(|v| v / n).collect();
        let next = mu_from_mean(&m, mu0, &p, cfg.rule);
        let defect = next.iter().zip(&mu).fold(0.0, |d: f64, (a, b)| d.max((a - b).abs()));
        if !defect.is_finite() {
            return Err(Error::Diverged { t: p.t_end, what: "Picard mean path".into(), guard: f64::INFINITY });
        }
        defects.push(defect);
        mu = next;
        if defect < cfg.tol {
            let times = (0..len).map(|k| p.time(k)).collect();
            let mean_drift = sd.iter().map(|v| v / n).collect();
            return Ok(PicardResult { path: MeanPath { times, m, mu, mean_drift }, defects });
        }
    }
    Err(Error::PicardNotConverged { defects })
}

/// Runs a cheap Picard solve with `coarse_samples` first and uses its mu
/// path as the starting guess for the full solve.
pub fn picard_solve_staged<E: Executor>(
    law: &InitLaw,
    mu0: f64,
    params: &ModelParams,
    cfg: &PicardConfig,
    coarse_samples: usize,
    exec: &E,
) -> Result<PicardResult> {
    let coarse_cfg = PicardConfig { n_samples: coarse_samples, tol: cfg.tol.max(1e-6), ..*cfg };
    let coarse = picard_solve(law, mu0, params, &coarse_cfg, None, exec)?;
    let mut full = picard_solve(law, mu0, params, cfg, Some(&coarse.path.mu), exec)?;
    let mut defects = coarse.defects;
    defects.append(&mut full.defects);
    full.defects = defects;
    Ok(full)
}

fn fit_or_fail(fit: RateFit) -> Result<RateFit> {
    if fit.r_squared < 0.9 || !fit.slope.is_finite() {
        return Err(Error::FitInconclusive { fit });
    }
    Ok(fit)
}

fn check_grid(grid: &[f64], name: &'static str) -> Result<()> {
    if grid.len() < 4 {
        return Err(Error::invalid(name, "at least 4 points"));
    }
    if !grid.iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, "positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosConfig {
    pub picard: PicardConfig,
    /// Samples for the preliminary Picard solve; `None` skips it.
    pub warm_start_samples: Option<usize>,
    pub n_replicas: usize,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        ChaosConfig {
            picard: PicardConfig { tol: 1e-6, ..PicardConfig::default() },
            warm_start_samples: Some(10_000),
            n_replicas: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosReport {
    pub fit: RateFit,
    pub reference: MeanPath,
}

/// Mean over particles of `sup_t |x_i - y_i|` for one replica of size `n`:
/// the particle system against independent limit copies driven by the
/// reference mu and the same Brownian increments.
pub fn coupling_error(
    n: usize,
    replica: u64,
    law: &InitLaw,
    mu0: f64,
    reference_mu: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    let p = *params;
    let tag = ((n as u64) << 24) | replica;
    let noise_base = RngStream::new(p.seed, CHAOS_NOISE | tag, 0);
    let init_base = RngStream::new(p.seed, CHAOS_INIT | tag, 0);
    let x0: Vec<f64> = (0..n as u64).map(|i| law.sample_pair(&init_base.substream(i)).0).collect();
    let mut state = crate::particle::ParticleState::new(x0.clone(), mu0)?;
    let mut y = x0;
    let mut noise: Vec<_> = (0..n as u64).map(|i| noise_base.substream(i).normals()).collect();
    let mut xi = vec![0.0; n];
    let mut sup = vec![0.0f64; n];
    let kick = p.sigma * libm::sqrt(p.dt);
    for &nu in &reference_mu[..reference_mu.len() - 1] {
        for (z, s) in xi.iter_mut().zip(noise.iter_mut()) {
            *z = s.next().unwrap_or(0.0);
        }
        step_particles(&mut state, &p, &xi, DIVERGENCE_GUARD)?;
        for i in 0..n {
            y[i] += (drift(y[i]) - nu) * p.dt + kick * xi[i];
            sup[i] = sup[i].max((state.x[i] - y[i]).abs());
        }
    }
    Ok(mean(&sup))
}

/// Measures how `E sup_t |x_1 - y_1|` decays with the number of particles.
pub fn chaos_rate_experiment<E: Executor>(
    params: &ModelParams,
    law: &InitLaw,
    mu0: f64,
    n_grid: &[usize],
    cfg: &ChaosConfig,
    exec: &E,
) -> Result<ChaosReport> {
    let p = params.validate()?;
    let grid: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    check_grid(&grid, "N grid")?;
    if cfg.n_replicas < 2 {
        return Err(Error::invalid("n_replicas", ">= 2"));
    }
    let reference = match cfg.warm_start_samples {
        Some(c) => picard_solve_staged(law, mu0, &p, &cfg.picard, c, exec)?,
        None => picard_solve(law, mu0, &p, &cfg.picard, None, exec)?,
    }
    .path;
    let r = cfg.n_replicas;
    let jobs = exec.map_indexed(n_grid.len() * r, |idx| {
        coupling_error(n_grid[idx / r], (idx % r) as u64, law, mu0, &reference.mu, &p)
    });
    let jobs: Vec<f64> = jobs.into_iter().collect::<Result<_>>()?;
    let mut errors = Vec::new();
    let mut stderrs = Vec::new();
    for chunk in jobs.chunks(r) {
        errors.push(mean(chunk));
        stderrs.push(std_error(chunk));
    }
    let fit = fit_or_fail(RateFit::new(grid, errors, stderrs))?;
    Ok(ChaosReport { fit, reference })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussErrorConfig {
    pub picard: PicardConfig,
    pub scheme: OdeScheme,
}

impl Default for GaussErrorConfig {
    fn default() -> Self {
        GaussErrorConfig {
            picard: PicardConfig {
                n_samples: 4000,
                tol: 1e-12,
                rule: KernelRule::Euler,
                ..PicardConfig::default()
            },
            scheme: OdeScheme::Euler,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussErrorReport {
    pub fit: RateFit,
    /// `sup_t E|R(t)|` for each sigma.
    pub remainder_sup: Vec<f64>,
}

/// One point of the Gaussian-approximation experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussErrorPoint {
    pub error: f64,
    pub stderr: f64,
    pub remainder_sup: f64,
}

/// Compares the limit process started at `x0` with `y = m + sigma z` from
/// the closed moment system, driven by the same Brownian motion.
pub fn gaussian_error_point<E: Executor>(
    params: &ModelParams,
    x0: f64,
    mu0: f64,
    cfg: &GaussErrorConfig,
    exec: &E,
) -> Result<GaussErrorPoint> {
    let p = params.validate()?;
    let means = gauss_mean_path((x0, mu0), &p, cfg.scheme, DIVERGENCE_GUARD)?;
    let nu: Vec<f64> = means.iter().map(|s| s.nu).collect();
    let law = InitLaw::Dirac { x: x0 };
    let sol = picard_solve(&law, mu0, &p, &cfg.picard, Some(&nu), exec)?.path;
    let field_gap = sol.mu.iter().zip(&nu).fold(0.0, |d: f64, (a, b)| d.max((a - b).abs()));

    let pc = cfg.picard;
    let units = pc.units();
    let len = means.len();
    let kick = p.sigma * libm::sqrt(p.dt);
    let sdt = libm::sqrt(p.dt);
    let s2 = p.sigma * p.sigma;
    let n_chunks = units.div_ceil(pc.chunk);
    let per_chunk = exec.map_indexed(n_chunks, |c| {
        let mut sups = Vec::new();
        let mut rsum = vec![0.0; len];
        for j in c * pc.chunk..((c + 1) * pc.chunk).min(units) {
            let signs: &[f64] = if pc.antithetic { &[1.0, -1.0] } else { &[1.0] };
            for &sign in signs {
                let stream = unit_streams(p.seed, j).1;
                let mut noise = stream.normals();
                let (mut x, mut z) = (x0, 0.0);
                let mut sup: f64 = 0.0;
                for k in 0..len {
                    let g = means[k];
                    sup = sup.max((x - (g.m + p.sigma * z)).abs());
                    let r = 3.0 * g.m * (z * z - g.v) + p.sigma * (z * z * z - 3.0 * g.v * z);
                    rsum[k] += r.abs();
                    if k + 1 < len {
                        let xi = sign * noise.next().unwrap_or(0.0);
                        x += (drift(x) - sol.mu[k]) * p.dt + kick * xi;
                        z += (1.0 - 3.0 * g.m * g.m - 3.0 * s2 * g.v) * z * p.dt + sdt * xi;
                    }
                }
                sups.push(sup);
            }
        }
        (sups, rsum)
    });
    let sups: Vec<f64> = per_chunk.iter().flat_map(|c| c.0.iter().copied()).collect();
    let remainder_sup = (0..len)
        .map(|k| {
            let col: Vec<f64> = per_chunk.iter().map(|c| c.1[k]).collect();
            pairwise_sum(&col) / sups.len() as f64
        })
        .fold(0.0, f64::max);
    // Antithetic partners are not independent: estimate the spread from pair means.
    let stderr = if pc.antithetic {
        let pairs: Vec<f64> = sups.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        std_error(&pairs)
    } else {
        std_error(&sups)
    };
    Ok(GaussErrorPoint { error: mean(&sups) + field_gap, stderr, remainder_sup })
}

/// Fits the Gaussian-approximation error against sigma.
pub fn gaussian_error_experiment<E: Executor>(
    params: &ModelParams,
    x0: f64,
    mu0: f64,
    sigma_grid: &[f64],
    cfg: &GaussErrorConfig,
    exec: &E,
) -> Result<GaussErrorReport> {
    check_grid(sigma_grid, "sigma grid")?;
    let mut errors = Vec::new();
    let mut stderrs = Vec::new();
    let mut remainder_sup = Vec::new();
    for &sigma in sigma_grid {
        let pt = gaussian_error_point(&ModelParams { sigma, ..*params }, x0, mu0, cfg, exec)?;
        errors.push(pt.error);
        stderrs.push(pt.stderr);
        remainder_sup.push(pt.remainder_sup);
    }
    let fit = fit_or_fail(RateFit::new(sigma_grid.to_vec(), errors, stderrs))?;
    Ok(GaussErrorReport { fit, remainder_sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    fn params(theta: f64, sigma: f64) -> ModelParams {
        ModelParams { alpha: 1.0, theta, sigma, dt: 1e-2, t_end: 1.0, ..Default::default() }
    }

    #[test]
    fn zero_coupling_is_exact_after_one_iteration() {
        let p = params(0.0, 0.3);
        let cfg = PicardConfig { n_samples: 64, ..Default::default() };
        let r = picard_solve(&InitLaw::Normal { mean: 0.5, sd: 0.5 }, 0.7, &p, &cfg, None, &Sequential).unwrap();
        assert_eq!(r.defects, vec![0.0]);
        for (k, mu) in r.path.mu.iter().enumerate() {
            assert_eq!(*mu, 0.7 * libm::exp(-p.time(k)));
        }
    }

    #[test]
    fn symmetric_law_gives_zero_mean() {
        let p = params(1.5, 0.4);
        let cfg = PicardConfig { n_samples: 128, ..Default::default() };
        let r = picard_solve(&InitLaw::TwoPoint { a: 1.0 }, 0.0, &p, &cfg, None, &Sequential).unwrap();
        assert!(r.path.m.iter().all(|&m| m == 0.0));
        assert!(r.path.mu.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn euler_rule_matches_recursion() {
        let p = params(2.0, 0.0);
        let m: Vec<f64> = (0..=100).map(|k| libm::sin(0.05 * k as f64)).collect();
        let mu = mu_from_mean(&m, 0.3, &p, KernelRule::Euler);
        let mut v = 0.3;
        for k in 0..100 {
            v = v - p.alpha * v * p.dt - p.theta * (m[k + 1] - m[k]);
            assert!((mu[k + 1] - v).abs() < 1e-14);
        }
    }
}
