use relboltz::io::{decode, MatrixData};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

const SMALL: &str = r#"{"basis": {"n_radial": 4, "l_max": 3, "m_max": 1}, "quadrature": {"qmc_samples": 20000}}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_relboltz"));
    c.env_remove("RELBOLTZ_OUT_DIR");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

/// Runs a subcommand and returns its exit code.
fn run(args: &[&str], config: &Path, out: &Path) -> i32 {
    let status = bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap();
    status.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn real_matrix(path: &Path) -> (u64, Vec<f64>, usize) {
    let (h, data) = decode(&std::fs::read(path).unwrap()).unwrap();
    match data {
        MatrixData::Real(m) => {
            let n = m.nrows();
            let v = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
            (h.seed, v, n)
        }
        MatrixData::Complex(_) => panic!("expected real"),
    }
}

fn errors_code(out: &Path) -> i64 {
    json(&out.join("errors.json"))["exit_code"].as_i64().unwrap()
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for text in [r#"{"basis": {"n_radial": 4, "l_max": 3, "m_max": 1, "typo": 1}}"#, "{not json", r#"{"spectrum": {"k_points": 0}}"#] {
        let cfg = write_config(dir.path(), text);
        assert_eq!(run(&["moments"], &cfg, &out), 1, "{text}");
        let e = json(&out.join("errors.json"));
        assert_eq!(e["exit_code"], 1);
        assert_eq!(e["errors"][0]["kind"], "InvalidConfig");
    }
    let status = bin().args(["moments", "--config"]).arg(dir.path().join("missing.json")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn moments_report_and_tolerance_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run(&["moments"], &cfg, &out), 0);
    let m = json(&out.join("moments.json"));
    let p0 = m["moments"]["p0"].as_f64().unwrap();
    let oracle = m["oracle"]["p0"].as_f64().unwrap();
    assert!((p0 - oracle).abs() / oracle <= m["rtol"].as_f64().unwrap());
    assert!(m["constants"]["a"].as_f64().unwrap() > 0.0);
    assert_eq!(errors_code(&out), 0);
    let loose = bin().args(["moments", "--rtol", "1e-2", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(loose.code(), Some(0));
    let strict = bin().args(["moments", "--rtol", "1e-300", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(strict.code(), Some(2));
    assert_eq!(json(&out.join("errors.json"))["errors"][0]["kind"], "ToleranceNotMet");
}

#[test]
fn assembly_outputs_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run(&["assemble"], &cfg, &out), 0);
    let manifest = json(&out.join("manifest.json"));
    for f in ["L.rbsm", "V.rbsm", "P0.rbsm", "basis.json", "assembly.json", "nu.csv", "moments.json"] {
        let entry = &manifest["files"][f];
        let bytes = std::fs::read(out.join(f)).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), hex_sha(&bytes), "{f}");
    }
    let (seed, l, n) = real_matrix(&out.join("L.rbsm"));
    assert_eq!(seed, relboltz::quadrature::QuadratureSet::default().seed);
    for i in 0..n {
        for j in 0..n {
            assert_eq!(l[i * n + j], l[j * n + i]);
        }
    }
    let nu = std::fs::read_to_string(out.join("nu.csv")).unwrap();
    assert!(nu.starts_with("speed,nu,nu_over_weight\n"));
    assert!(!nu.contains('\r'));
    assert_eq!(nu.lines().count(), 32);

    let strict = write_config(
        dir.path(),
        r#"{"basis": {"n_radial": 4, "l_max": 3, "m_max": 1}, "quadrature": {"qmc_samples": 2000}, "tolerances": {"assembly": 1e-9}}"#,
    );
    assert_eq!(run(&["assemble"], &strict, &dir.path().join("strict")), 3);
    assert_eq!(json(&dir.path().join("strict/errors.json"))["errors"][0]["kind"], "AssemblyTolerance");
}

fn hex_sha(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

#[test]
fn seeds_differ_within_error_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["assemble"], &cfg, &a), 0);
    let st = bin().args(["assemble", "--seed", "12345", "--config"]).arg(&cfg).arg("--out").arg(&b).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let (sa, la, _) = real_matrix(&a.join("L.rbsm"));
    let (sb, lb, _) = real_matrix(&b.join("L.rbsm"));
    assert_eq!(sb, 12345);
    assert_ne!(sa, sb);
    let ea = json(&a.join("assembly.json"))["lmat_error"].as_f64().unwrap();
    let eb = json(&b.join("assembly.json"))["lmat_error"].as_f64().unwrap();
    let diff = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff > 0.0);
    // each estimate is off by about its half-difference; independent errors add
    assert!(diff <= 2.0 * (ea + eb), "diff {diff} vs estimates {ea} {eb}");
}

#[test]
fn minimal_basis_gives_vanishing_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), r#"{"basis": {"n_radial": 1, "l_max": 1, "m_max": 1}, "quadrature": {"qmc_samples": 20000}}"#);
    assert_eq!(run(&["assemble"], &cfg, &out), 0);
    let (_, l, n) = real_matrix(&out.join("L.rbsm"));
    assert_eq!(n, 5);
    assert!(l.iter().all(|x| x.abs() < 1e-12), "{l:?}");
    assert!(json(&out.join("assembly.json"))["muhat"].is_null());
}

#[test]
fn spectrum_shape_and_staging() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run(&["spectrum"], &cfg, &out), 0);
    let csv = std::fs::read_to_string(out.join("branches.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,branch,re,im,residual"));
    assert_eq!(lines.count(), 5 * 41);
    let l_before = std::fs::read(out.join("L.rbsm")).unwrap();
    let first = json(&out.join("manifest.json"))["timings"]["assemble"].as_f64().unwrap();
    // the second command reuses the staged matrices
    assert_eq!(run(&["dispersion"], &cfg, &out), 0);
    let m = json(&out.join("manifest.json"));
    assert!(m["timings"]["assemble"].as_f64().unwrap() < 0.5 * first);
    assert_eq!(std::fs::read(out.join("L.rbsm")).unwrap(), l_before);
    assert!(m["files"]["branches.csv"].is_object());
    assert!(m["files"]["dispersion.csv"].is_object());
    let d = json(&out.join("dispersion.json"));
    let worst = d["result"]["residuals"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().clone()).map(|v| v.as_f64().unwrap()).fold(0.0, f64::max);
    assert!(worst <= 1e-10);
}

#[test]
fn failing_spectrum_check_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        r#"{"basis": {"n_radial": 4, "l_max": 3, "m_max": 1}, "quadrature": {"qmc_samples": 20000}, "tolerances": {"first_order": 1e-14}}"#,
    );
    assert_eq!(run(&["spectrum"], &cfg, &out), 4);
    let e = json(&out.join("errors.json"));
    assert_eq!(e["errors"][0]["kind"], "AcceptanceCheck");
    assert!(out.join("branches.csv").exists());
}

#[test]
fn decay_scenario_flag_and_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), SMALL);
    let st = bin().args(["decay", "--scenario", "microscopic", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let s = json(&out.join("slopes.json"));
    let sc = s["scenarios"].as_array().unwrap();
    assert_eq!(sc.len(), 1);
    assert_eq!(sc[0]["kind"], "microscopic");
    let macro_rate = sc[0]["observables"][0]["slope"].as_f64().unwrap();
    assert!((macro_rate + 1.25).abs() < 0.05);
    let strict = write_config(
        dir.path(),
        r#"{"basis": {"n_radial": 4, "l_max": 3, "m_max": 1}, "quadrature": {"qmc_samples": 20000}, "tolerances": {"slope": 1e-9}}"#,
    );
    assert_eq!(run(&["decay"], &strict, &dir.path().join("strict")), 5);
}

#[test]
fn env_var_sets_output_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let env_out = dir.path().join("from_env");
    let st = bin().env("RELBOLTZ_OUT_DIR", &env_out).args(["moments", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(env_out.join("moments.json").exists());
    let flag_out = dir.path().join("from_flag");
    let st = bin().env("RELBOLTZ_OUT_DIR", &env_out).args(["moments", "--config"]).arg(&cfg).arg("--out").arg(&flag_out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(flag_out.join("moments.json").exists());
}

#[test]
fn identical_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let st = bin().args(["report", "--threads", "1", "--config"]).arg(&cfg).arg("--out").arg(&a).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let st = bin().args(["report", "--threads", "2", "--config"]).arg(&cfg).arg("--out").arg(&b).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let ma = json(&a.join("manifest.json"));
    let mb = json(&b.join("manifest.json"));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["files"], mb["files"]);
}
