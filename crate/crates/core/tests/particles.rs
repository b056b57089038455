use meanfield_core::particle::*;
use meanfield_core::rng::RngStream;
use meanfield_core::ModelParams;
use proptest::prelude::*;

fn params(alpha: f64, theta: f64, sigma: f64, dt: f64, t_end: f64, n: usize) -> ModelParams {
    ModelParams { alpha, theta, sigma, dt, t_end, n_particles: n, seed: 11 }
}

/// Independent RK4 integration of the coefficient ODE system.
fn coeff_rk4(a0: &[f64], d: f64, alpha: f64, t: f64, steps: usize) -> Vec<f64> {
    let n = a0.len() - 1;
    let rhs = |a: &[f64]| -> Vec<f64> {
        (0..=n)
            .map(|k| {
                if k < 2 {
                    0.0
                } else {
                    let up = if k + 2 <= n { d * ((k + 2) * (k + 1)) as f64 * a[k + 2] } else { 0.0 };
                    -alpha * a[k] + up
                }
            })
            .collect()
    };
    let h = t / steps as f64;
    let mut a = a0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&a);
        let y: Vec<f64> = a.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
        let k2 = rhs(&y);
        let y: Vec<f64> = a.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
        let k3 = rhs(&y);
        let y: Vec<f64> = a.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
        let k4 = rhs(&y);
        for i in 0..=n {
            a[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    a
}

#[test]
fn coefficient_flow_matches_numerical_integration() {
    let c0 = PotentialCoeffs { a: vec![0.1, 0.2, -1.0, 0.5, 0.25, -0.3, 0.7], diffusion: 0.4 };
    for t in [0.3, 1.0, 2.5] {
        let exact = coefficient_flow(&c0, 1.3, t);
        let num = coeff_rk4(&c0.a, 0.4, 1.3, t, 2000);
        for (a, b) in exact.a.iter().zip(&num) {
            assert!((a - b).abs() < 1e-10, "t = {t}: {a} vs {b}");
        }
    }
}

#[test]
fn coefficients_vanish_at_large_times() {
    let c0 = PotentialCoeffs { a: vec![0.0, 0.0, 1.0, -2.0, 3.0, 1.0, 5.0], diffusion: 2.0 };
    let c = coefficient_flow(&c0, 0.5, 200.0);
    assert!(c.a[2..].iter().all(|v| v.abs() < 1e-30));
}

#[test]
fn uncoupled_field_decays_exponentially() {
    let p = params(1.5, 0.0, 0.0, 1e-3, 2.0, 8);
    let init = ParticleState::new(vec![0.3; 8], 0.8).unwrap();
    let run = simulate_particles(&init, &p, &ParticleRunConfig::default()).unwrap();
    for (t, s) in run.trajectory.iter() {
        // Euler error on exp(-alpha t) is about alpha^2 t dt / 2 relative.
        assert!((s.mu - 0.8 * (-1.5 * t).exp()).abs() <= 0.8 * 1.5 * 1.5 * t * 1e-3, "t = {t}");
    }
}

#[test]
fn runs_are_reproducible() {
    let p = params(1.0, 2.9, 0.3, 1e-3, 1.0, 64);
    let init = ParticleState::split(64, 0.0).unwrap();
    let cfg = ParticleRunConfig { record_particles: true, ..Default::default() };
    let a = simulate_particles(&init, &p, &cfg).unwrap();
    let b = simulate_particles(&init, &p, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trajectory.times[0], 0.0);
    assert_eq!(a.trajectory.len(), 101);
}

#[test]
fn hasminskii_average_stays_bounded() {
    let p = params(1.0, 2.0, 0.8, 1e-3, 50.0, 200);
    let init = ParticleState::split(200, 0.0).unwrap();
    let cfg = ParticleRunConfig { record_stride: 100, record_particles: true, ..Default::default() };
    let run = simulate_particles(&init, &p, &cfg).unwrap();
    let parts = run.particles.unwrap();
    let mut total = 0.0;
    for (i, (x, s)) in parts.records.iter().zip(&run.trajectory.records).enumerate() {
        let st = ParticleState { x: x.clone(), mu: s.mu, t: 0.0 };
        total += hasminskii_value(&st, 1.0);
        let avg = total / (i + 1) as f64;
        assert!(avg < 5.0, "running average {avg}");
    }
}

#[test]
fn hasminskii_decreases_outside_a_compact_set_without_noise() {
    let p = params(1.0, 1.0, 0.0, 1e-3, 5.0, 4);
    let mut s = ParticleState::new(vec![4.0, -3.0, 3.5, 2.0], 2.0).unwrap();
    let mut prev = hasminskii_value(&s, 1.0);
    for _ in 0..5000 {
        step_particles(&mut s, &p, &[0.0; 4], DIVERGENCE_GUARD).unwrap();
        let v = hasminskii_value(&s, 1.0);
        if prev > 10.0 {
            assert!(v <= prev + 1e-9, "{v} > {prev}");
        }
        prev = v;
    }
}

/// Stationary variance of m^N around the split state from the linearized
/// collective dynamics `dZ = A Z dt + sigma/sqrt(N) (1, -theta) dW`, where
/// `A` is the Jacobian of the macroscopic flow at (1, 0).
fn linear_variance_of_mean(alpha: f64, theta: f64, sigma: f64, n: usize) -> f64 {
    let a = meanfield_core::flow::jacobian2(meanfield_core::flow::MacroState::new(1.0, 0.0), alpha, theta).matrix;
    let b = [1.0, -theta];
    // A S + S A^T + b b^T = 0 for S = [[p, q], [q, r]], by Cramer's rule.
    let m = [
        [2.0 * a[0][0], 2.0 * a[0][1], 0.0],
        [a[1][0], a[0][0] + a[1][1], a[0][1]],
        [0.0, 2.0 * a[1][0], 2.0 * a[1][1]],
    ];
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let mut m0 = m;
    for (row, r) in m0.iter_mut().zip([-b[0] * b[0], -b[0] * b[1], -b[1] * b[1]]) {
        row[0] = r;
    }
    det(&m0) / det(&m) * sigma * sigma / n as f64
}

#[test]
fn split_state_fluctuations_match_linear_theory() {
    let p = params(1.0, 2.9, 0.05, 1e-3, 2000.0, 100);
    let init = ParticleState::split(100, 0.0).unwrap();
    let run = simulate_particles(&init, &p, &ParticleRunConfig { record_stride: 10, ..Default::default() }).unwrap();
    // Skip five relaxation times of the collective mode (rate 0.05).
    let tail: Vec<f64> = run.trajectory.iter().filter(|(t, _)| *t >= 100.0).map(|(_, s)| s.m).collect();
    let var = tail.iter().map(|m| m * m).sum::<f64>() / tail.len() as f64;
    let want = linear_variance_of_mean(1.0, 2.9, 0.05, 100);
    assert!((want / (0.05f64 * 0.05 / 100.0) - 7.5).abs() < 1e-12);
    assert!((var / want - 1.0).abs() < 0.25, "{var} vs {want}");
}

proptest! {
    #[test]
    fn mirrored_runs_are_mirrored(
        xs in prop::collection::vec(-2.0f64..2.0, 1..40),
        mu in -1.0f64..1.0,
        seed in 0u64..1000,
        theta in 0.0f64..4.0,
    ) {
        let p = params(1.0, theta, 0.5, 1e-3, 1.0, xs.len());
        let noise = RngStream::new(seed, 0, 0);
        let mut a = ParticleState::new(xs.clone(), mu).unwrap();
        let mut b = a.mirrored();
        for k in 0..50u64 {
            let xi: Vec<f64> = (0..xs.len() as u64).map(|i| meanfield_core::rng::gaussian_draw(&noise.substream(i), k)).collect();
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            step_particles(&mut a, &p, &xi, DIVERGENCE_GUARD).unwrap();
            step_particles(&mut b, &p, &neg, DIVERGENCE_GUARD).unwrap();
        }
        prop_assert_eq!(a.mirrored(), b);
    }

    #[test]
    fn field_step_matches_the_increment_form(
        xs in prop::collection::vec(-2.0f64..2.0, 1..40),
        xi in prop::collection::vec(-3.0f64..3.0, 40),
        mu in -1.0f64..1.0,
        theta in 0.0f64..4.0,
        alpha in 0.1f64..3.0,
    ) {
        let n = xs.len();
        let p = params(alpha, theta, 0.7, 1e-2, 1.0, n);
        let mut s = ParticleState::new(xs, mu).unwrap();
        let m_before = s.mean();
        step_particles(&mut s, &p, &xi[..n], DIVERGENCE_GUARD).unwrap();
        let dm = s.mean() - m_before;
        let alt = mu - alpha * mu * p.dt - theta * dm;
        prop_assert!((s.mu - alt).abs() < 1e-12 * (1.0 + mu.abs() + theta));
    }
}
