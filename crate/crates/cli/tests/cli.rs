use std::path::Path;
use std::process::{Command, Output};

fn mink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mink")).args(args).output().expect("mink runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn selftest_passes() {
    let o = mink(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().all(|l| l.starts_with("ok")));
}

#[test]
fn solve_constant_data_returns_the_disc() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let init = r#"{"name":"random_even","seed":5,"amplitude":0.3,"max_degree":6}"#;
    let o = mink(&["solve", "--n", "1", "--p", "0", "--f", "const:1", "--res", "64", "--init", init, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    for key in ["tool_version", "config_hash", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["report"]["converged"], true);
    // The embedded body is readable by the other commands.
    let info = mink(&["body", "info", "--body", out.to_str().unwrap()]);
    let info: serde_json::Value = serde_json::from_slice(&info.stdout).unwrap();
    let (lo, hi) = (info["report"]["h_min"].as_f64().unwrap(), info["report"]["h_max"].as_f64().unwrap());
    assert!((lo - 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6, "{lo} {hi}");
}

#[test]
fn eigen_of_the_disc_starts_at_four() {
    let dir = tempfile::tempdir().unwrap();
    let body = dir.path().join("ball.json");
    assert_eq!(code(&mink(&["body", "make", "--res", "32", "--out", body.to_str().unwrap()])), 0);
    let o = mink(&["eigen", "--body", body.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# tool_version="));
    assert!(text.lines().nth(1) == Some("index,eigenvalue,residual"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 6);
    let first: f64 = rows[0][1].parse().unwrap();
    assert!((first - 4.0).abs() < 1e-8);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&mink(&["solve", "--p", "0", "--f", "expr:cos-bump:a=2"])), 2);
    assert_eq!(code(&mink(&["solve", "--p", "1.5"])), 2);
    assert_eq!(code(&mink(&["solve"])), 2);
    assert_eq!(code(&mink(&["no-such-command"])), 2);
    let init = r#"{"name":"random_even","seed":3,"amplitude":0.3,"max_degree":6}"#;
    assert_eq!(code(&mink(&["solve", "--p", "0", "--max-iters", "2", "--init", init])), 4);
    let dir = tempfile::tempdir().unwrap();
    let body = dir.path().join("k.json");
    let k = r#"{"name":"random_even","seed":3,"amplitude":0.3,"max_degree":6}"#;
    assert_eq!(code(&mink(&["body", "make", "--catalog", k, "--out", body.to_str().unwrap()])), 0);
    // A random body is not critical for constant data.
    assert_eq!(code(&mink(&["variation", "--body", body.to_str().unwrap(), "--p", "0"])), 3);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mink(&["bm-check", "--p", "0.25", "--random-pairs", "4", "--check", "both", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        std::fs::read(out).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().next().unwrap().ends_with("seed=11"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[6] == "holds"));
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command":"eigen-sweep","q":[2,4],"res":16}"#).unwrap();
    let o = mink(&["eigen-sweep", "--config", cfg.to_str().unwrap(), "--q", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    std::fs::write(&cfg, r#"{"command":"eigen-sweep","bogus":1}"#).unwrap();
    assert_eq!(code(&mink(&["eigen-sweep", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn f_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    let n = 8 * 16;
    let values: Vec<f64> = (0..n)
        .map(|k| 1.0 + 0.2 * (4.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect();
    let doc = serde_json::json!({
        "domain": {"version": 1, "n": 1, "basis_kind": "fourier-even", "resolution": 16},
        "values": values,
    });
    std::fs::write(&f, doc.to_string()).unwrap();
    let out = dir.path().join("s.json");
    let src = format!("file:{}", f.display());
    let o = mink(&["solve", "--p", "0.5", "--res", "16", "--f", &src, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&out)["report"]["residual"].as_f64().unwrap() < 1e-8);
    // Wrong resolution for the stored field.
    assert_eq!(code(&mink(&["solve", "--p", "0.5", "--res", "8", "--f", &src])), 2);
}

#[test]
fn stability_and_sweep_tables() {
    let o = mink(&["stability", "--res", "32", "--schedule", "4,6,8,12"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bound holds"));
    let o = mink(&["eigen-sweep", "--res", "32", "--q", "2,4,8"]);
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    let l: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(l[0] > l[1] && l[1] > l[2]);
}

#[test]
fn probe_reports_inapplicable_gap() {
    let o = mink(&["probe-nonunique", "--p", "-0.05", "--q", "4", "--res", "32"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["status"], "inapplicable_eigenvalue_gap");
}
