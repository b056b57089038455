use alloc::string::String;
use alloc::vec::Vec;

use crate::stats::RateFit;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{field} must be {requirement}")]
    InvalidParameter {
        field: &'static str,
        requirement: &'static str,
    },
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("run diverged at t = {t}: |{what}| exceeded {guard}")]
    Diverged { t: f64, what: String, guard: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },
    #[error("cell Peclet number {peclet} exceeds {limit}; refine the grid")]
    Peclet { peclet: f64, limit: f64 },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("indicator is not monotone on the bracket: {0}")]
    NotMonotone(String),
    #[error("verification failed: {0}")]
    VerificationFailure(String),
    #[error("no loss of stability for sigma in [{lo}, {hi}]")]
    NotExcitable { lo: f64, hi: f64 },
    #[error(
        "Picard iteration did not converge in {n} iterations (last defect {last:e})",
        n = defects.len(),
        last = defects.last().copied().unwrap_or(f64::NAN)
    )]
    PicardNotConverged { defects: Vec<f64> },
    #[error("rate fit inconclusive (r^2 = {r2:.3})", r2 = fit.r_squared)]
    FitInconclusive { fit: RateFit },
}

impl Error {
    pub fn invalid(field: &'static str, requirement: &'static str) -> Self {
        Error::InvalidParameter { field, requirement }
    }
}
