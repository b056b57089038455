//! Finite-N particle system, potential coefficient flow and the
//! Hasminskii-type Lyapunov diagnostic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{Normals, RngStream};
use crate::stats::{pairwise_sum, pairwise_sum_map};
use crate::trajectory::Trajectory;

/// Default bound on |x_i| before a run is declared diverged.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Stream id reserved for particle-run noise; replicas use `stream_id + r`.
pub const PARTICLE_STREAM: u64 = 0x5041_5254_0000_0000;

#[inline]
pub(crate) fn drift(x: f64) -> f64 {
    -x * x * x + x
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub x: Vec<f64>,
    pub mu: f64,
    pub t: f64,
}

impl ParticleState {
    pub fn new(x: Vec<f64>, mu: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("x", "non-empty"));
        }
        if !x.iter().all(|v| v.is_finite()) || !mu.is_finite() {
            return Err(Error::invalid("initial state", "finite"));
        }
        Ok(ParticleState { x, mu, t: 0.0 })
    }

    /// First half of the particles at +1, the rest at -1.
    pub fn split(n: usize, mu: f64) -> Result<Self> {
        let x = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
        Self::new(x, mu)
    }

    /// Empirical mean m^N.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.x) / self.x.len() as f64
    }

    /// The image under (x, mu) -> (-x, -mu).
    pub fn mirrored(&self) -> Self {
        ParticleState { x: self.x.iter().map(|v| -v).collect(), mu: -self.mu, t: self.t }
    }
}

/// One Euler-Maruyama step with caller-supplied standard normals `xi`.
///
/// The mu update reuses the particle noise, so the field moves by
/// `-(alpha - theta) mu dt - theta/N sum f(x_i) dt - theta sigma/N sum sqrt(dt) xi_i`.
pub fn step_particles(
    state: &mut ParticleState,
    params: &ModelParams,
    xi: &[f64],
    guard: f64,
) -> Result<()> {
    debug_assert_eq!(xi.len(), state.x.len());
    let n = state.x.len() as f64;
    let dt = params.dt;
    let kick = params.sigma * libm::sqrt(dt);
    let mu = state.mu;

    let drift_sum = pairwise_sum_map(&state.x, drift);
    let noise_sum = pairwise_sum(xi);

    let mut worst: f64 = 0.0;
    for (x, &z) in state.x.iter_mut().zip(xi) {
        *x += (drift(*x) - mu) * dt + kick * z;
        worst = worst.max(x.abs());
    }
    state.mu = mu - (params.alpha - params.theta) * mu * dt
        - params.theta * (drift_sum / n) * dt
        - params.theta * kick * (noise_sum / n);
    state.t += dt;

    if !(worst <= guard) {
        return Err(Error::Diverged { t: state.t, what: format!("x_i = {worst:e}"), guard });
    }
    Ok(())
}

/// Per-particle noise for one replica. Particle `i` reads substream `i`.
#[derive(Debug, Clone)]
pub struct ParticleNoise {
    streams: Vec<Normals>,
}

impl ParticleNoise {
    pub fn new(seed: u64, replica: u64, n: usize) -> Self {
        let base = RngStream::new(seed, PARTICLE_STREAM.wrapping_add(replica), 0);
        ParticleNoise { streams: (0..n as u64).map(|i| base.substream(i).normals()).collect() }
    }

    /// Writes the next draw of every particle into `out`.
    pub fn fill(&mut self, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(self.streams.iter_mut()) {
            *o = s.next().unwrap_or(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleRunConfig {
    pub record_stride: usize,
    pub record_particles: bool,
    pub guard: f64,
    pub replica: u64,
}

impl Default for ParticleRunConfig {
    fn default() -> Self {
        ParticleRunConfig {
            record_stride: 10,
            record_particles: false,
            guard: DIVERGENCE_GUARD,
            replica: 0,
        }
    }
}

/// Snapshot of the collective variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSnapshot {
    pub m: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub trajectory: Trajectory<MeanSnapshot>,
    pub particles: Option<Trajectory<Vec<f64>>>,
}

/// Runs the particle system from `init` to `params.t_end`.
pub fn simulate_particles(
    init: &ParticleState,
    params: &ModelParams,
    cfg: &ParticleRunConfig,
) -> Result<ParticleRun> {
    let params = params.validate()?;
    if cfg.record_stride == 0 {
        return Err(Error::invalid("record_stride", ">= 1"));
    }
    let n = init.x.len();
    let mut state = ParticleState { t: 0.0, ..init.clone() };
    let mut noise = ParticleNoise::new(params.seed, cfg.replica, n);
    let mut xi = vec![0.0; n];

    let mut traj = Trajectory::new(params);
    let mut parts = cfg.record_particles.then(|| Trajectory::new(params));
    let record = |k: usize, s: &ParticleState, traj: &mut Trajectory<MeanSnapshot>, parts: &mut Option<Trajectory<Vec<f64>>>| {
        let t = params.time(k);
        traj.push(t, MeanSnapshot { m: s.mean(), mu: s.mu });
        if let Some(p) = parts {
            p.push(t, s.x.clone());
        }
    };
    record(0, &state, &mut traj, &mut parts);
    for k in 1..=params.n_steps() {
        noise.fill(&mut xi);
        step_particles(&mut state, &params, &xi, cfg.guard)?;
        if k % cfg.record_stride == 0 {
            record(k, &state, &mut traj, &mut parts);
        }
    }
    Ok(ParticleRun { trajectory: traj, particles: parts })
}

/// Polynomial potential `V(x) = sum a_k x^k` with diffusion `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCoeffs {
    pub a: Vec<f64>,
    pub diffusion: f64,
}

impl PotentialCoeffs {
    pub fn degree(&self) -> usize {
        self.a.len().saturating_sub(1)
    }
}

/// Exact solution at time `t` of `a_k' = -alpha a_k + D (k+2)(k+1) a_{k+2}`
/// for `k >= 2`.
///
/// `a_0` and `a_1` are returned unchanged: `a_1` carries the coupling to the
/// particle system and is not evolved here.
pub fn coefficient_flow(c0: &PotentialCoeffs, alpha: f64, t: f64) -> PotentialCoeffs {
    let n = c0.degree();
    let d = c0.diffusion;
    let decay = libm::exp(-alpha * t);
    let mut a = c0.a.clone();
    for (k, ak) in a.iter_mut().enumerate().skip(2) {
        // Chain k -> k+2 -> ... contributes a_{k+2j}(0) prod c * t^j / j!.
        let mut acc = 0.0;
        let mut weight = 1.0;
        let mut j = 0;
        while k + 2 * j <= n {
            acc += c0.a[k + 2 * j] * weight;
            let m = (k + 2 * j) as f64;
            j += 1;
            weight *= d * (m + 2.0) * (m + 1.0) * t / j as f64;
        }
        *ak = decay * acc;
    }
    PotentialCoeffs { a, diffusion: d }
}

/// `(1/N) sum (x^4/4 + x^2/2) + (a/2) mu^2`.
pub fn hasminskii_value(state: &ParticleState, a: f64) -> f64 {
    let s = pairwise_sum_map(&state.x, |x| {
        let x2 = x * x;
        0.25 * x2 * x2 + 0.5 * x2
    });
    s / state.x.len() as f64 + 0.5 * a * state.mu * state.mu
}
