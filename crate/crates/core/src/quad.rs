//! Adaptive Simpson quadrature.

use alloc::vec::Vec;

/// Integral of `f` over `[a, b]` to roughly `tol` absolute error.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Explicit stack: (a, b, fa, fm, fb, estimate, tol, depth).
    let mut stack: Vec<[f64; 8]> = Vec::new();
    stack.push([a, b, fa, fm, fb, whole, tol, 0.0]);
    let mut total = 0.0;
    while let Some([a, b, fa, fm, fb, est, tol, depth]) = stack.pop() {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - est;
        if depth >= 50.0 || diff.abs() <= 15.0 * tol {
            total += left + right + diff / 15.0;
        } else {
            stack.push([m, b, fm, frm, fb, right, 0.5 * tol, depth + 1.0]);
            stack.push([a, m, fa, flm, fm, left, 0.5 * tol, depth + 1.0]);
        }
    }
    total
}
