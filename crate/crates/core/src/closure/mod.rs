//! Gaussian moment closure: the (m, nu, V) system, its equilibria and
//! their linear stability, and the excitability threshold sigma_c.

mod path;

pub use path::{
    fluctuation_path, gauss_mean_path, moment_residual, simulate_gauss_path, GaussPathConfig,
    GaussRecord, OdeScheme,
};

use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::cubic::cubic_roots;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussState {
    pub m: f64,
    pub nu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "V"))]
    pub v: f64,
}

impl GaussState {
    pub const fn new(m: f64, nu: f64, v: f64) -> Self {
        GaussState { m, nu, v }
    }
}

/// Right-hand side of the closed moment system. The nu rate is composed
/// from the freshly computed m rate.
#[inline]
pub fn gauss_vector_field(s: GaussState, alpha: f64, theta: f64, sigma: f64) -> (f64, f64, f64) {
    let s2 = sigma * sigma;
    let dm = -s.m * s.m * s.m + s.m - s.nu - 3.0 * s2 * s.m * s.v;
    let dnu = -alpha * s.nu - theta * dm;
    let dv = 1.0 + 2.0 * (1.0 - 3.0 * s.m * s.m) * s.v - 6.0 * s2 * s.v * s.v;
    (dm, dnu, dv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EquilibriumLabel {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl EquilibriumLabel {
    pub const ALL: [EquilibriumLabel; 5] = [
        EquilibriumLabel::S1,
        EquilibriumLabel::S2,
        EquilibriumLabel::S3,
        EquilibriumLabel::S4,
        EquilibriumLabel::S5,
    ];
}

/// Closed-form equilibrium. `s1`/`s2` exist for `sigma^2 <= 1/3` including
/// `sigma = 0`; `s3`, `s4` need `0 < sigma^2 <= 1/3`; `s5` needs `sigma > 0`.
pub fn gauss_equilibrium(label: EquilibriumLabel, sigma: f64) -> Result<GaussState> {
    use EquilibriumLabel::*;
    let s2 = sigma * sigma;
    if !(s2 >= 0.0 && s2.is_finite()) {
        return Err(Error::Domain(format!("sigma = {sigma}")));
    }
    if label == S5 {
        if s2 == 0.0 {
            return Err(Error::Domain("s5 requires sigma > 0".into()));
        }
        let v = (1.0 + libm::sqrt(1.0 + 6.0 * s2)) / (6.0 * s2);
        return Ok(GaussState::new(0.0, 0.0, v));
    }
    if 3.0 * s2 > 1.0 {
        return Err(Error::Domain(format!("{label:?} requires sigma^2 <= 1/3, got {s2}")));
    }
    let r = libm::sqrt(1.0 - 3.0 * s2);
    match label {
        S1 | S2 => {
            // (1 - r) / (6 sigma^2) rewritten without cancellation.
            let v = 1.0 / (2.0 * (1.0 + r));
            let m = libm::sqrt(0.5 * (1.0 + r));
            Ok(GaussState::new(if label == S1 { m } else { -m }, 0.0, v))
        }
        _ => {
            if s2 == 0.0 {
                return Err(Error::Domain(format!("{label:?} requires sigma > 0")));
            }
            let v = (1.0 + r) / (6.0 * s2);
            // (1 - r) / 2 rewritten as 3 sigma^2 / (2 (1 + r)).
            let m = libm::sqrt(1.5 * s2 / (1.0 + r));
            Ok(GaussState::new(if label == S4 { m } else { -m }, 0.0, v))
        }
    }
}

/// Relative size of the field at `s`: each component divided by the
/// magnitude of the terms that cancel in it.
pub fn relative_residual(s: GaussState, alpha: f64, theta: f64, sigma: f64) -> f64 {
    let (dm, dnu, dv) = gauss_vector_field(s, alpha, theta, sigma);
    let s2 = sigma * sigma;
    let am = s.m.abs();
    let sm = am * am * am + am + s.nu.abs() + 3.0 * s2 * (s.m * s.v).abs();
    let sv = 1.0 + (2.0 * (1.0 - 3.0 * s.m * s.m) * s.v).abs() + 6.0 * s2 * s.v * s.v;
    let snu = alpha * s.nu.abs() + theta * sm;
    (dm.abs() / sm.max(1.0)).max(dnu.abs() / snu.max(1.0)).max(dv.abs() / sv)
}

/// All equilibria that exist at this `sigma > 0`, each checked to be a
/// zero of the field to 1e-12 relative.
pub fn gauss_equilibria(
    alpha: f64,
    theta: f64,
    sigma: f64,
) -> Result<Vec<(EquilibriumLabel, GaussState)>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("equilibrium scan needs sigma > 0, got {sigma}")));
    }
    let mut out = Vec::new();
    for label in EquilibriumLabel::ALL {
        if label != EquilibriumLabel::S5 && 3.0 * sigma * sigma > 1.0 {
            continue;
        }
        let s = gauss_equilibrium(label, sigma)?;
        let res = relative_residual(s, alpha, theta, sigma);
        if !(res < 1e-12) {
            return Err(Error::VerificationFailure(format!(
                "{label:?} at sigma = {sigma} has field residual {res:e}"
            )));
        }
        out.push((label, s));
    }
    Ok(out)
}

/// Jacobian of [`gauss_vector_field`] in the variables (m, nu, V).
pub fn gauss_jacobian_matrix(s: GaussState, alpha: f64, theta: f64, sigma: f64) -> [[f64; 3]; 3] {
    let s2 = sigma * sigma;
    let dm_dm = 1.0 - 3.0 * s.m * s.m - 3.0 * s2 * s.v;
    let dm_dv = -3.0 * s2 * s.m;
    [
        [dm_dm, -1.0, dm_dv],
        [-theta * dm_dm, theta - alpha, -theta * dm_dv],
        [-12.0 * s.m * s.v, 0.0, 2.0 * (1.0 - 3.0 * s.m * s.m) - 12.0 * s2 * s.v],
    ]
}

/// Coefficients `[c2, c1, c0]` of the monic characteristic polynomial.
pub fn char_poly(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let tr = a[0][0] + a[1][1] + a[2][2];
    let minors = (a[0][0] * a[1][1] - a[0][1] * a[1][0])
        + (a[0][0] * a[2][2] - a[0][2] * a[2][0])
        + (a[1][1] * a[2][2] - a[1][2] * a[2][1]);
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    [-tr, minors, -det]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    pub label: Option<EquilibriumLabel>,
    pub point: GaussState,
    pub eigenvalues: [Complex64; 3],
    pub max_real_part: f64,
    pub stable: bool,
    /// Largest characteristic-polynomial residual, relative to the sum of
    /// the absolute values of its terms.
    pub residual: f64,
}

/// Linear stability of the closed system at an arbitrary point.
pub fn gauss_jacobian(point: GaussState, alpha: f64, theta: f64, sigma: f64) -> SpectrumReport {
    let j = gauss_jacobian_matrix(point, alpha, theta, sigma);
    let [c2, c1, c0] = char_poly(&j);
    let eigenvalues = cubic_roots(c2, c1, c0);
    let residual = eigenvalues
        .iter()
        .map(|&z| {
            let p = ((z + c2) * z + c1) * z + c0;
            let n = z.norm();
            let scale = n * n * n + c2.abs() * n * n + c1.abs() * n + c0.abs();
            if scale == 0.0 { 0.0 } else { p.norm() / scale }
        })
        .fold(0.0, f64::max);
    let max_real_part = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    SpectrumReport {
        label: None,
        point,
        eigenvalues,
        max_real_part,
        stable: max_real_part < 0.0,
        residual,
    }
}

/// Spectrum at a labelled equilibrium.
pub fn spectrum_at(
    label: EquilibriumLabel,
    alpha: f64,
    theta: f64,
    sigma: f64,
) -> Result<SpectrumReport> {
    let p = gauss_equilibrium(label, sigma)?;
    Ok(SpectrumReport { label: Some(label), ..gauss_jacobian(p, alpha, theta, sigma) })
}

/// Slope of Re lambda in sigma^2 at sigma = 0 on the Hopf line theta = alpha + 2.
pub fn excitability_slope(alpha: f64) -> f64 {
    3.0 * (10.0 - alpha) / (2.0 * (8.0 + alpha))
}

/// Closed-form sigma above which s5 is linearly stable.
pub fn s5_stability_threshold(alpha: f64, theta: f64) -> Result<f64> {
    let rad = (2.0 / 3.0) * (alpha - theta) * (alpha - theta - 1.0);
    if !(rad > 0.0) {
        return Err(Error::Domain(format!(
            "threshold radicand (2/3)(alpha - theta)(alpha - theta - 1) = {rad} is not positive"
        )));
    }
    Ok(libm::sqrt(rad))
}

/// Reorders `next` so that each entry is the nearest continuation of the
/// corresponding entry of `prev` (minimum total distance over all pairings).
pub fn continue_eigenvalues(prev: &[Complex64; 3], next: [Complex64; 3]) -> [Complex64; 3] {
    const PERMS: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let cost = |p: &[usize; 3]| (0..3).map(|i| (next[p[i]] - prev[i]).norm()).sum::<f64>();
    let best = PERMS
        .iter()
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .copied()
        .unwrap_or([0, 1, 2]);
    [next[best[0]], next[best[1]], next[best[2]]]
}

/// Follows the eigenvalue that starts nearest `start` along `sigmas`.
pub fn track_eigenvalue(
    label: EquilibriumLabel,
    alpha: f64,
    theta: f64,
    sigmas: &[f64],
    start: Complex64,
) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(sigmas.len());
    let mut prev: Option<[Complex64; 3]> = None;
    let mut idx = 0;
    for &s in sigmas {
        let ev = spectrum_at(label, alpha, theta, s)?.eigenvalues;
        let ev = match &prev {
            Some(p) => continue_eigenvalues(p, ev),
            None => {
                idx = (0..3)
                    .min_by(|&a, &b| (ev[a] - start).norm().total_cmp(&(ev[b] - start).norm()))
                    .unwrap_or(0);
                ev
            }
        };
        out.push(ev[idx]);
        prev = Some(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub tol: f64,
}

impl ScanConfig {
    /// The bracket on which s1 and s2 exist.
    pub fn sigma_c_default() -> Self {
        ScanConfig { lo: 1e-4, hi: 1.0 / libm::sqrt(3.0) - 1e-4, points: 200, tol: 1e-12 }
    }
}

/// Result of a stability-change search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityChange {
    pub sigma: f64,
    /// Continued eigenvalue whose real part changes sign.
    pub eigenvalue: Complex64,
    /// True when the equilibrium goes from stable to unstable as sigma grows.
    pub destabilizing: bool,
}

/// First sigma in the scan where the sign of the largest real part of the
/// spectrum at `label` changes, refined by bisection. `None` if the sign is
/// constant on the whole grid.
pub fn find_stability_change(
    label: EquilibriumLabel,
    alpha: f64,
    theta: f64,
    cfg: &ScanConfig,
) -> Result<Option<StabilityChange>> {
    if !(cfg.lo > 0.0 && cfg.hi > cfg.lo) || cfg.points < 2 {
        return Err(Error::invalid("scan bracket", "0 < lo < hi with at least 2 points"));
    }
    let maxre = |s: f64| spectrum_at(label, alpha, theta, s).map(|r| r.max_real_part);
    let step = (cfg.hi - cfg.lo) / (cfg.points - 1) as f64;
    let mut prev_s = cfg.lo;
    let mut prev_v = maxre(prev_s)?;
    let mut prev_ev = spectrum_at(label, alpha, theta, prev_s)?.eigenvalues;
    for i in 1..cfg.points {
        let s = if i == cfg.points - 1 { cfg.hi } else { cfg.lo + step * i as f64 };
        let rep = spectrum_at(label, alpha, theta, s)?;
        let ev = continue_eigenvalues(&prev_ev, rep.eigenvalues);
        let v = rep.max_real_part;
        if (prev_v < 0.0) != (v < 0.0) {
            let destabilizing = prev_v < 0.0;
            let (mut a, mut b) = (prev_s, s);
            while b - a > cfg.tol {
                let mid = 0.5 * (a + b);
                if (maxre(mid)? < 0.0) == (prev_v < 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let sigma = 0.5 * (a + b);
            let at = continue_eigenvalues(&prev_ev, spectrum_at(label, alpha, theta, sigma)?.eigenvalues);
            let k = (0..3)
                .min_by(|&x, &y| at[x].re.abs().total_cmp(&at[y].re.abs()))
                .unwrap_or(0);
            return Ok(Some(StabilityChange { sigma, eigenvalue: at[k], destabilizing }));
        }
        prev_s = s;
        prev_v = v;
        prev_ev = ev;
    }
    Ok(None)
}

/// Noise level at which s1 (or s2) loses linear stability.
pub fn find_sigma_c(
    alpha: f64,
    theta: f64,
    label: EquilibriumLabel,
    cfg: &ScanConfig,
) -> Result<StabilityChange> {
    if !matches!(label, EquilibriumLabel::S1 | EquilibriumLabel::S2) {
        return Err(Error::Domain(format!("sigma_c is defined for s1 and s2, not {label:?}")));
    }
    if spectrum_at(label, alpha, theta, cfg.lo)?.max_real_part >= 0.0 {
        return Err(Error::Domain(format!(
            "{label:?} is already unstable at sigma = {} (theta = {theta})",
            cfg.lo
        )));
    }
    match find_stability_change(label, alpha, theta, cfg)? {
        Some(c) => Ok(c),
        None => Err(Error::NotExcitable { lo: cfg.lo, hi: cfg.hi }),
    }
}
