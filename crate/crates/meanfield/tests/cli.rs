use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use meanfield::config::{load_file, Format, InitKind, Kernel, Label, Scheme};
use meanfield::output::Manifest;
use meanfield::{Command, PartialConfig, RunConfig, EXIT_INCONCLUSIVE, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK};
use proptest::prelude::*;

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_meanfield"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let o = bin().args(args).env_remove("MEANFIELD_THREADS").output().unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn header(p: &Path) -> String {
    fs::read_to_string(p).unwrap().lines().next().unwrap().to_string()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn phase_above_hopf_is_periodic() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("phase");
    let (code, _, err) = run(&["phase", "--alpha", "1", "--theta", "3.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let j = read_json(&out.join("phase.json"));
    assert_eq!(j["phase"], "PeriodicOrbit");
    assert_eq!(j["hopf"], 3.0);
    assert_eq!(j["cycles"].as_array().unwrap().len(), 1);
    let t1 = j["theta1"].as_f64().unwrap();
    assert!(t1 > 0.0 && t1 < 3.0);
}

#[test]
fn spectrum_on_the_hopf_line() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("s");
    let (code, _, err) = run(&["spectrum", "--alpha", "2", "--theta", "4", "--sigma", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let j = read_json(&out.join("spectrum.json"));
    let list = j.as_array().unwrap();
    // Only s1 and s2 exist without noise.
    assert_eq!(list.len(), 2);
    let s1 = list.iter().find(|r| r["label"] == "s1").unwrap();
    let mut ev: Vec<(f64, f64)> = s1["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|z| (z[0].as_f64().unwrap(), z[1].as_f64().unwrap()))
        .collect();
    ev.sort_by(|a, b| a.1.total_cmp(&b.1));
    let want = [(0.0, -2.0), (-4.0, 0.0), (0.0, 2.0)];
    for (a, b) in ev.iter().zip(want) {
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9, "{ev:?}");
    }
}

#[test]
fn missing_config_is_a_validation_error() {
    let (code, _, err) = run(&["particles", "--config", "missing.toml"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("missing.toml"), "{err}");
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let d = tempfile::tempdir().unwrap();
    let o = |n: &str| d.path().join(n).to_str().unwrap().to_string();
    assert_eq!(run(&["phase", "--alpha", "-1", "--out", &o("a")]).0, EXIT_INVALID);
    assert_eq!(run(&["no-such-command"]).0, EXIT_INVALID);
    assert_eq!(run(&["gauss", "--bogus", "1"]).0, EXIT_INVALID);
    // Nothing to find: s1 stays stable for every admissible sigma.
    assert_eq!(run(&["sigma-c", "--theta", "0.5", "--out", &o("b")]).0, EXIT_INCONCLUSIVE);
    // Weak noise on a coarse grid violates the cell Peclet bound.
    let (code, _, err) = run(&["fokker-planck", "--sigma", "0.02", "--n-cells", "20", "--t-end", "1", "--dump-times", "0", "--out", &o("c")]);
    assert_eq!(code, EXIT_NUMERICAL, "{err}");
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn csv_headers_are_fixed() {
    let d = tempfile::tempdir().unwrap();
    let o = |n: &str| d.path().join(n);
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let cases: [(&[&str], &str, &str); 4] = [
        (&["particles", "--n-particles", "4", "--t-end", "0.1", "--record-particles", "true"], "particles.csv", "t,m_N,mu"),
        (&["macro-ode", "--t-end", "1"], "macro.csv", "t,x,mu"),
        (&["gauss", "--t-end", "1"], "gauss.csv", "t,m,nu,V,z,y"),
        (&["fokker-planck", "--t-end", "0.1", "--dump-times", "0"], "fp_stationary.csv", "x,q"),
    ];
    for (i, (args, file, want)) in cases.iter().enumerate() {
        let dir = o(&i.to_string());
        let mut a: Vec<String> = args.iter().map(|x| x.to_string()).collect();
        a.extend(["--out".into(), s(&dir)]);
        let (code, _, err) = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code, EXIT_OK, "{args:?}: {err}");
        assert_eq!(header(&dir.join(file)), *want);
    }
    assert_eq!(header(&o("0").join("positions.csv")), "t,x_0,x_1,x_2,x_3");
    assert_eq!(header(&o("3").join("fp_density_t0.csv")), "x,q");
    assert_eq!(header(&o("3").join("fp_density_t0.1.csv")), "x,q");
    let summary = read_json(&o("3").join("fp_summary.json"));
    let keys: Vec<&String> = summary[0].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["L1_dist_to_qstar", "m1", "m2", "mass", "mu", "t"]);
}

#[test]
fn rate_outputs_have_their_headers() {
    let d = tempfile::tempdir().unwrap();
    let c = d.path().join("c");
    let (code, _, err) = run(&[
        "chaos-rate", "--n-grid", "5,10,20,40", "--n-replicas", "4", "--n-samples", "2000",
        "--warm-start-samples", "0", "--t-end", "0.2", "--out", c.to_str().unwrap(),
    ]);
    // A tiny run may or may not pass the fit gate; the files exist either way.
    assert!(code == EXIT_OK || code == EXIT_INCONCLUSIVE, "{err}");
    assert_eq!(header(&c.join("chaos_rate.csv")), "N,error,stderr");
    let fit = read_json(&c.join("chaos_rate.json"));
    for k in ["abscissae", "errors", "stderrs", "slope", "intercept", "r_squared"] {
        assert!(fit.get(k).is_some(), "{k}");
    }

    let g = d.path().join("g");
    let (code, _, err) = run(&["gauss-error", "--n-samples", "200", "--t-end", "0.2", "--out", g.to_str().unwrap()]);
    assert!(code == EXIT_OK || code == EXIT_INCONCLUSIVE, "{err}");
    assert_eq!(header(&g.join("gauss_error.csv")), "sigma,error,stderr");
}

#[test]
fn manifest_rerun_reproduces_outputs_bitwise() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    let (code, _, err) = run(&["particles", "--n-particles", "50", "--t-end", "2", "--seed", "7", "--out", a.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let manifest = a.join("manifest.json");
    let (code, _, err) = run(&["particles", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m: Manifest = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m.seed, 7);
    assert_eq!(m.outputs, ["particles.csv"]);
    for f in &m.outputs {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // Rerunning in place with no flags rewrites the same bytes, manifest included.
    let before = fs::read(&manifest).unwrap();
    let (code, _, _) = run(&["particles", "--config", manifest.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read(&manifest).unwrap(), before);
}

#[test]
fn manifest_for_another_command_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    assert_eq!(run(&["macro-ode", "--t-end", "1", "--out", a.to_str().unwrap()]).0, EXIT_OK);
    let (code, _, err) = run(&["gauss", "--config", a.join("manifest.json").to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("macro-ode"), "{err}");
}

#[test]
fn outputs_stay_inside_the_directory() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("inner");
    let (code, _, err) = run(&["reproduce-figures", "--t-end", "5", "--n-particles", "100", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(listing(d.path()), ["inner"]);
    let m: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let mut expected = m.outputs.clone();
    expected.push("manifest.json".into());
    expected.sort();
    assert_eq!(listing(&out), expected);
    let idx = read_json(&out.join("figures.json"));
    assert_eq!(header(&out.join(idx["fig2"]["cycle"].as_str().unwrap())), "t,x,mu");
    assert_eq!(header(&out.join(idx["fig2"]["path"].as_str().unwrap())), "t,m,nu,V,z,y");
    for run in idx["fig1"]["runs"].as_array().unwrap() {
        assert_eq!(header(&out.join(run["file"].as_str().unwrap())), "t,m_N,mu");
    }
    for run in idx["fig3"]["runs"].as_array().unwrap() {
        assert_eq!(header(&out.join(run["file"].as_str().unwrap())), "t,m,nu,V,z,y");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let d = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for t in ["1", "4"] {
        let out = d.path().join(t);
        let o = bin()
            .args(["chaos-rate", "--n-grid", "5,10,20,40", "--n-replicas", "6", "--n-samples", "1000"])
            .args(["--warm-start-samples", "0", "--t-end", "0.2", "--out", out.to_str().unwrap()])
            .env("MEANFIELD_THREADS", t)
            .output()
            .unwrap();
        assert!(matches!(o.status.code(), Some(0 | 2)));
        bytes.push((fs::read(out.join("chaos_rate.csv")).unwrap(), fs::read(out.join("chaos_rate.json")).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn precedence_is_flags_then_file_then_defaults() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("c.toml");
    fs::write(&path, "theta = 2.5\nsigma = 0.3\nn_grid = [1, 2]\n").unwrap();
    let file = load_file(&path).unwrap();
    let flags = PartialConfig { sigma: Some(0.7), ..Default::default() };
    let c = RunConfig::resolve(Command::ChaosRate, Some(&file), &flags).unwrap();
    assert_eq!(c.theta, 2.5);
    assert_eq!(c.sigma, 0.7);
    assert_eq!(c.n_grid, [1, 2]);
    assert_eq!(c.alpha, RunConfig::defaults(Command::ChaosRate).alpha);

    fs::write(&path, "thetta = 2.5\n").unwrap();
    assert!(load_file(&path).is_err());
}

fn any_config() -> impl Strategy<Value = RunConfig> {
    let cmd = prop::sample::select(vec![
        Command::Particles, Command::MacroOde, Command::Phase, Command::Gauss, Command::Spectrum,
        Command::SigmaC, Command::FokkerPlanck, Command::ChaosRate, Command::GaussError, Command::ReproduceFigures,
    ]);
    let f = || prop_oneof![-1e6f64..1e6, 1e-300f64..1e-290, Just(0.0), Just(-0.0)];
    (
        cmd,
        (f(), f(), f(), f(), 0u64..(i64::MAX as u64)),
        (any::<bool>(), prop::collection::vec(f(), 0..4), prop::collection::vec(0usize..5000, 0..4)),
        (any::<bool>(), any::<bool>(), any::<bool>(), "[a-z/_.]{1,12}"),
    )
        .prop_map(|(cmd, (a, th, s, dt, seed), (fmt, dumps, grid), (sch, ker, lab, dir))| RunConfig {
            alpha: a,
            theta: th,
            sigma: s,
            dt,
            seed,
            format: if fmt { Format::Json } else { Format::Csv },
            dump_times: dumps.clone(),
            fig3_m0s: dumps,
            n_grid: grid,
            scheme: if sch { Scheme::Euler } else { Scheme::Rk4 },
            kernel: if ker { Kernel::Euler } else { Kernel::Trapezoid },
            label: if lab { Label::S2 } else { Label::S1 },
            init: if lab { InitKind::Normal } else { InitKind::Split },
            out_dir: dir,
            ..RunConfig::defaults(cmd)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_toml(c in any_config()) {
        let text = c.to_toml().unwrap();
        let file: PartialConfig = toml::from_str(&text).unwrap();
        let back = RunConfig::resolve(c.command, Some(&file), &PartialConfig::default()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn config_round_trips_through_the_manifest(c in any_config()) {
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(RunConfig::defaults(c.command).apply(&c.to_partial()), c);
    }
}
