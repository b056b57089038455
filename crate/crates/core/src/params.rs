use crate::error::{Error, Result};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Shared model and discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub alpha: f64,
    pub theta: f64,
    pub sigma: f64,
    pub n_particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 1.0,
            theta: 1.0,
            sigma: 0.1,
            n_particles: 1000,
            dt: 1e-3,
            t_end: 10.0,
            seed: DEFAULT_SEED,
        }
    }
}

impl ModelParams {
    /// Checks every constraint and returns the parameters unchanged.
    pub fn validate(self) -> Result<Self> {
        check_positive("alpha", self.alpha)?;
        if !self.theta.is_finite() {
            return Err(Error::invalid("theta", "finite"));
        }
        if self.theta < 0.0 {
            return Err(Error::invalid("theta", ">= 0"));
        }
        if !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", "finite"));
        }
        if self.sigma < 0.0 {
            return Err(Error::invalid("sigma", ">= 0"));
        }
        if self.n_particles == 0 {
            return Err(Error::invalid("n_particles", ">= 1"));
        }
        check_positive("dt", self.dt)?;
        check_positive("t_end", self.t_end)?;
        if self.t_end < self.dt {
            return Err(Error::invalid("t_end", ">= dt"));
        }
        Ok(self)
    }

    /// Number of steps of size `dt` needed to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        libm::round(self.t_end / self.dt) as usize
    }

    /// Time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::invalid(field, "finite"));
    }
    if v <= 0.0 {
        return Err(Error::invalid(field, "> 0"));
    }
    Ok(())
}
