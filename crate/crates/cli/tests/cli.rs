use std::path::Path;
use std::process::{Command, Output};

fn levy_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-lab")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

/// Data rows of a CSV with its `# config` line and header removed.
fn rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config {"), "missing config echo");
    lines.next().expect("header");
    lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn cf_matches_sech() {
    let out = levy_lab(&["cf", "--t", "0.5,1,2"]);
    assert!(out.status.success());
    for row in rows(&stdout(&out)) {
        let t: f64 = row[0].parse().unwrap();
        let re: f64 = row[1].parse().unwrap();
        assert!((re - 1.0 / t.cosh()).abs() < 1e-4, "t={t}: {re}");
    }
}

#[test]
fn cf_range_syntax() {
    let out = levy_lab(&["cf", "--t", "0:1:0.25"]);
    let ts: Vec<String> = rows(&stdout(&out)).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(ts, ["0", "0.25", "0.5", "0.75", "1"]);
}

#[test]
fn pvar_auto_uses_critical_index() {
    let out = levy_lab(&["pvar", "--kernel", "fbm", "--hurst", "0.35", "--max-level", "6", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["schema_version"], 1);
    let p = v["config"]["p"].as_f64().unwrap();
    assert!((p - 1.0 / 0.7).abs() < 1e-12);
}

#[test]
fn cauchy_halves_per_level() {
    let out = levy_lab(&["cauchy", "--levels", "1:5"]);
    assert!(out.status.success());
    let norms: Vec<f64> = rows(&stdout(&out)).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(norms.len(), 4);
    for (n, v) in (1..).zip(norms) {
        assert!((v - 2f64.powi(-n - 2)).abs() < 1e-12);
    }
}

#[test]
fn spectrum_top_pair() {
    let out = levy_lab(&["spectrum", "--grid", "64"]);
    assert!(out.status.success());
    let top = &rows(&stdout(&out))[..2];
    for r in top {
        let a: f64 = r[0].parse().unwrap();
        assert!((a.abs() - 1.0 / std::f64::consts::PI).abs() < 0.01);
        assert_eq!(r[1], "2");
    }
}

#[test]
fn check_passes() {
    let out = levy_lab(&["check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // details may contain quoted commas, so match the status column by its delimiters
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().skip(2).collect();
    assert!(data.len() >= 15);
    assert!(data.iter().all(|l| l.contains(",pass,")), "{text}");
}

#[test]
fn json_summary_file() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let out = levy_lab(&["simulate", "--samples", "50", "--level", "3", "--summary", summary.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["n_samples"], 50);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(levy_lab(&["cf", "--kernel", "fbm"]).status.code(), Some(2));
    assert_eq!(levy_lab(&["spectrum", "--grid", "0"]).status.code(), Some(2));
    assert_eq!(levy_lab(&["cf", "--t", "1:0:0.1x"]).status.code(), Some(2));
    assert_eq!(levy_lab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(levy_lab(&["--threads", "0", "check"]).status.code(), Some(2));
    assert_eq!(levy_lab(&["--config", "/nonexistent/levy.conf", "check"]).status.code(), Some(2));
}

#[test]
fn non_psd_table_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("s,t,value\n");
    for s in [0.0, 0.5, 1.0] {
        for t in [0.0, 0.5, 1.0] {
            body += &format!("{s},{t},{}\n", -f64::min(s, t));
        }
    }
    let table = write(dir.path(), "neg.csv", &body);
    let spec = format!("kind=tabulated file={table}");
    let out = levy_lab(&["simulate", "--kernel", &spec, "--samples", "10", "--level", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_defers_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.conf", "# comment\nlevel = 3\nsamples=20\n");
    let out = levy_lab(&["--config", &cfg, "simulate", "--level", "2", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["config"]["level"], 2);
    assert_eq!(v["config"]["n_samples"], 20);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--samples", "500", "--level", "5", "--seed", "11"];
    let a = levy_lab(&args);
    let b = levy_lab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = levy_lab(&["simulate", "--samples", "500", "--level", "5", "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}
