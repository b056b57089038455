//! Roots of real monic cubics.

use num_complex::Complex64;

/// Roots of `l^3 + c2 l^2 + c1 l + c0`, real root(s) first.
pub(crate) fn cubic_roots(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
    let shift = c2 / 3.0;
    let p = c1 - c2 * shift;
    let q = 2.0 * shift * shift * shift - shift * c1 + c0;
    let half_q = 0.5 * q;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;

    let mut roots = if disc > 0.0 {
        // One real root and a conjugate pair. Choosing the sign of `a`
        // against q avoids cancellation.
        let a = -libm::copysign(libm::cbrt(half_q.abs() + libm::sqrt(disc)), half_q);
        let b = if a != 0.0 { -third_p / a } else { 0.0 };
        let re = -0.5 * (a + b) - shift;
        let im = 0.5 * libm::sqrt(3.0) * (a - b);
        [
            Complex64::new(a + b - shift, 0.0),
            Complex64::new(re, im.abs()),
            Complex64::new(re, -im.abs()),
        ]
    } else {
        let r = 2.0 * libm::sqrt(-third_p);
        let arg = if r == 0.0 { 0.0 } else { (3.0 * q / (p * r)).clamp(-1.0, 1.0) };
        let phi = libm::acos(arg) / 3.0;
        let tau = 2.0 * core::f64::consts::PI / 3.0;
        [
            Complex64::new(r * libm::cos(phi) - shift, 0.0),
            Complex64::new(r * libm::cos(phi - tau) - shift, 0.0),
            Complex64::new(r * libm::cos(phi - 2.0 * tau) - shift, 0.0),
        ]
    };
    for z in roots.iter_mut() {
        *z = polish(*z, c2, c1, c0);
    }
    #[cfg(debug_assertions)]
    cross_check(&roots, c2, c1, c0);
    roots
}

fn eval(z: Complex64, c2: f64, c1: f64, c0: f64) -> (Complex64, Complex64) {
    let p = ((z + c2) * z + c1) * z + c0;
    let dp = (z * 3.0 + 2.0 * c2) * z + c1;
    (p, dp)
}

/// Newton refinement, kept only while it reduces the residual.
fn polish(mut z: Complex64, c2: f64, c1: f64, c0: f64) -> Complex64 {
    for _ in 0..3 {
        let (p, dp) = eval(z, c2, c1, c0);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let cand = if z.im == 0.0 { Complex64::new(cand.re, 0.0) } else { cand };
        if eval(cand, c2, c1, c0).0.norm() < p.norm() {
            z = cand;
        } else {
            break;
        }
    }
    z
}

/// Independent Durand-Kerner iteration; every analytic root must have a
/// Durand-Kerner root nearby.
#[cfg(debug_assertions)]
fn cross_check(roots: &[Complex64; 3], c2: f64, c1: f64, c0: f64) {
    let dk = durand_kerner(c2, c1, c0);
    let scale = 1.0 + c2.abs().max(c1.abs()).max(c0.abs());
    for r in roots {
        let d = dk.iter().map(|z| (z - r).norm()).fold(f64::INFINITY, f64::min);
        debug_assert!(
            d <= 1e-4 * scale * (1.0 + r.norm()),
            "cubic root {r} disagrees with Durand-Kerner {dk:?}"
        );
    }
}

#[cfg(debug_assertions)]
fn durand_kerner(c2: f64, c1: f64, c0: f64) -> [Complex64; 3] {
    let seed = Complex64::new(0.4, 0.9);
    let mut z = [Complex64::new(1.0, 0.0), seed, seed * seed];
    for _ in 0..500 {
        let mut delta: f64 = 0.0;
        for i in 0..3 {
            let mut den = Complex64::new(1.0, 0.0);
            for (j, zj) in z.iter().enumerate() {
                if j != i {
                    den *= z[i] - zj;
                }
            }
            if den.norm() == 0.0 {
                continue;
            }
            let step = eval(z[i], c2, c1, c0).0 / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    z
}
