use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_droopcert"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DROOPCERT_OUT")
        .output()
        .expect("spawn droopcert")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn identify(tmp: &TempDir, config: &str) -> PathBuf {
    let out = tmp.path().join(config);
    let o = run(&["identify", "--analytic", "--config", &cfg(config)], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("dataset.json")
}

#[test]
fn analytic_gfm_low_frequency_gain() {
    let tmp = TempDir::new().unwrap();
    let ds = identify(&tmp, "gfm_droop.toml");
    let bode = std::fs::read_to_string(ds.with_file_name("bode.csv")).unwrap();
    let mut lines = bode.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "m_p_gain_db").unwrap();
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((first[col] - 20.0 * 0.05f64.log10()).abs() < 0.01, "{}", first[col]);
    assert!((first[col] + 26.02).abs() < 0.01);
}

#[test]
fn gfm_certifies_and_gfl_fails_robust() {
    let tmp = TempDir::new().unwrap();
    let gfm = identify(&tmp, "gfm_droop.toml");
    let o = run(
        &["certify", "--config", &cfg("gfm_droop.toml"), "--dataset", gfm.to_str().unwrap()],
        &tmp.path().join("c1"),
    );
    assert_eq!(code(&o), 0);
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("c1/certificate.json")).unwrap()).unwrap();
    assert!(cert["suggested_alpha"].as_f64().is_some());

    let gfl = identify(&tmp, "gfl_pll.toml");
    let o = run(
        &["certify", "--config", &cfg("gfl_pll.toml"), "--dataset", gfl.to_str().unwrap(), "--robust"],
        &tmp.path().join("c2"),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn input_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[grid\nf_min = ").unwrap();
    let o = run(&["certify", "--config", bad.to_str().unwrap()], &tmp.path().join("a"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("parsing config"));

    let o = run(
        &["certify", "--config", &cfg("gfm_droop.toml"), "--dataset", "/nonexistent/dataset.json"],
        &tmp.path().join("b"),
    );
    assert_eq!(code(&o), 2);

    let ds = identify(&tmp, "low_gain_template.toml");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&ds).unwrap()).unwrap();
    v["samples"] = serde_json::json!([]);
    let empty = tmp.path().join("empty.json");
    std::fs::write(&empty, v.to_string()).unwrap();
    let o = run(
        &["bounds", "--config", &cfg("low_gain_template.toml"), "--dataset", empty.to_str().unwrap()],
        &tmp.path().join("c"),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn template_and_perf_pass() {
    let tmp = TempDir::new().unwrap();
    let ds = identify(&tmp, "low_gain_template.toml");
    for cmd in ["bounds", "perf"] {
        let o = run(
            &[cmd, "--config", &cfg("low_gain_template.toml"), "--dataset", ds.to_str().unwrap()],
            &tmp.path().join(cmd),
        );
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn minl_contour_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("m");
    let o = run(&["minl", "--config", &cfg("minl_transient.toml")], &out);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("contour.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 200);
    // Fixed rho: ell_min grows with m_bar_p.
    let rho0 = rows[0][1];
    let col: Vec<f64> = rows.iter().filter(|r| r[1] == rho0).map(|r| r[2]).collect();
    assert_eq!(col.len(), 20);
    assert!(col.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn oracle_random_and_network() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let o = run(&["oracle", "--config", &cfg("oracle_random.toml"), "--seed", "7"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("trials.json")).unwrap()).unwrap();
    let trials = v["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 100);
    assert!(trials.iter().all(|t| t["stable"] == true));

    let out = tmp.path().join("n");
    let o = run(&["oracle", "--config", &cfg("two_bus_step.toml")], &out);
    assert_eq!(code(&o), 0);
    let step = std::fs::read_to_string(out.join("step.csv")).unwrap();
    let last: Vec<f64> = step.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    // Steady state: -delta_p / sum(psi / m_p(0)).
    assert!((last[1] + 0.1 / 22.0).abs() < 1e-6, "{last:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let a = identify(&tmp, "gfm_droop.toml");
    let out_b = tmp.path().join("again");
    let o = run(&["identify", "--analytic", "--config", &cfg("gfm_droop.toml")], &out_b);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(out_b.join("dataset.json")).unwrap());

    let certs: Vec<Vec<u8>> = ["x", "y"]
        .iter()
        .map(|d| {
            let out = tmp.path().join(d);
            let o = run(&["certify", "--config", &cfg("gfm_droop.toml"), "--dataset", a.to_str().unwrap()], &out);
            assert_eq!(code(&o), 0);
            std::fs::read(out.join("certificate.json")).unwrap()
        })
        .collect();
    assert_eq!(certs[0], certs[1]);
}
