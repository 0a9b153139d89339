use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn jumplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumplab"))
        .args(args)
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_prints_eight_kinds() {
    let o = jumplab(&["--list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.contains('[')));
    assert_eq!(
        text,
        String::from_utf8(jumplab(&["--list"]).stdout).unwrap()
    );
}

#[test]
fn constant_kernel_passes_with_zero_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("constant_kernel.toml");
    let o = jumplab(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("PASS ")));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["constants"]["beta0"], serde_json::json!(0.0));
    assert_eq!(report["data"]["conditions"]["c1"], serde_json::json!(0.0));
    assert_eq!(report["data"]["conditions"]["c2"], serde_json::json!(0.0));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_alpha_field_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "bad.toml",
        "kind = \"check_kernel\"\n[kernel]\ntype = \"stable_like\"\ndim = 1\nalpha = { profile = \"tanh\", amplitude = 0.1 }\n",
    );
    let o = jumplab(&["--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel.alpha.base"), "{}", stderr(&o));
}

#[test]
fn inconsistent_alpha_bounds_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "bad.toml",
        "kind = \"check_kernel\"\n[kernel]\ntype = \"stable_like\"\ndim = 1\nalpha_lower = 1.5\nalpha = { profile = \"tanh\", base = 0.7, amplitude = 0.1 }\n",
    );
    let o = jumplab(&["--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel"), "{}", stderr(&o));
}

#[test]
fn syntax_errors_report_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", "kind = \"check_kernel\"\n[kernel\n");
    let o = jumplab(&["--config", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unreadable_config_and_zero_threads_are_config_errors() {
    let o = jumplab(&["--config", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
    let cfg = configs().join("constant_kernel.toml");
    let o = jumplab(&["--config", cfg.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--threads"));
}

#[test]
fn seed_flag_satisfies_a_missing_seed_and_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"sampler_check\"\n[sampler]\nalphas = [1.5]\ndims = [1]\ndraws = 20000\necf_tolerance = 0.05\ndump = 10\n";
    let p = write(dir.path(), "s.toml", text);
    assert_eq!(jumplab(&["--config", &p]).status.code(), Some(2));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = jumplab(&[
            "--config",
            &p,
            "--seed",
            "5",
            "--threads",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );
    assert!(fs::read_dir(&a).unwrap().any(|e| e
        .unwrap()
        .path()
        .extension()
        .is_some_and(|x| x == "csv")));
}

#[test]
fn failed_checks_exit_1_and_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind = \"sampler_check\"\nseed = 1\n[sampler]\nalphas = [1.5]\ndims = [1]\ndraws = 200\necf_tolerance = 1e-9\ndump = 0\n";
    let p = write(dir.path(), "s.toml", text);
    let o = jumplab(&["--config", &p, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("failing checks:"), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL "));
}

#[test]
fn every_shipped_config_parses() {
    for e in fs::read_dir(configs()).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        jumplab::experiment::ExperimentConfig::parse(&text)
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn dual_counterexample_config_finds_negative_eta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("dual_counterexample.toml");
    let o = jumplab(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(
        report["data"]["negativity"]["value"].as_f64().unwrap() < 0.0,
        "{}",
        report["data"]
    );
    assert!(report["data"]["negativity"]["lambda_star"]
        .as_f64()
        .is_some());
}
