use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lattice-ldp"));
    cmd.env_remove("LATTICE_LDP_OUT");
    cmd
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Bundled OU config with the model edited in place.
fn edited_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut doc = json(&bundled("ou.json"));
    edit(&mut doc);
    let path = dir.join("edited.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

#[test]
fn validate_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate"], &bundled("cubic_tanh.json"), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("validation.json"));
    assert_eq!(report["alpha"], 0.8);
    assert!((report["delta_norm_sq"].as_f64().unwrap() - 1.74).abs() < 1e-12);
    // max_{|s| <= 3} |3 s^2 - 1 + 1| = 27
    assert!((report["drift_lipschitz"].as_f64().unwrap() - 27.0).abs() < 1e-9);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["operation"], "validate");
    assert_eq!(manifest["outputs"], serde_json::json!(["validation.json"]));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn rate_of_the_linear_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["rate", "--strict"], &bundled("ou.json"), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let est = json(&dir.path().join("rate.json"));
    assert!((est["cost"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-3);
    assert!(est["residual"].as_f64().unwrap() < 1e-6);
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(csv.starts_with("stage,lambda,iteration,objective,grad_norm"));
}

#[test]
fn positive_gamma_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), |d| d["model"]["drift"]["gamma"] = 0.5.into());
    let o = run(&["validate"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("(F1)"), "{err}");
    assert!(err.contains(r"F_0^\prime (s) \ge \gamma"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn parse_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), |d| d["model"]["drift"]["nu"] = "fast".into());
    let o = run(&["validate"], &config, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("model.drift.nu") && err.contains("line"), "{err}");

    let config = edited_config(dir.path(), |d| d["sed"] = 3.into());
    let o = run(&["validate"], &config, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sed"));
}

#[test]
fn stochastic_runs_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), |d| {
        d.as_object_mut().unwrap().remove("seed");
    });
    let o = run(&["simulate"], &config, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
    let o = run(&["simulate", "--seed", "5"], &config, &dir.path().join("ok"));
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("cubic_tanh.json");
    for (threads, sub) in [("1", "a"), ("4", "b")] {
        for cmd in ["simulate", "probe-h1", "probe-compact"] {
            let o = run(&[cmd, "--threads", threads], &cfg, &dir.path().join(sub).join(cmd));
            assert!(o.status.success(), "{}", stderr(&o));
        }
    }
    for (cmd, file) in [
        ("simulate", "samples.csv"),
        ("probe-h1", "h1_probe.csv"),
        ("probe-compact", "compactness.csv"),
    ] {
        let a = std::fs::read(dir.path().join("a").join(cmd).join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(cmd).join(file)).unwrap();
        assert_eq!(a, b, "{cmd}");
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["skeleton", "--config"])
        .arg(bundled("ou.json"))
        .env("LATTICE_LDP_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = json(&dir.path().join("manifest.json"));
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn strict_mode_flags_unconverged_optimiser() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), |d| {
        d["rate"]["options"] = serde_json::json!({
            "penalties": [100.0],
            "tolerance": 1e-6,
            "grad_tolerance": 1e-8,
            "max_iterations": 1,
            "multiplier_updates": 1
        });
    });
    let lax = run(&["rate"], &config, &dir.path().join("lax"));
    assert!(lax.status.success());
    let strict = run(&["rate", "--strict"], &config, &dir.path().join("strict"));
    assert_eq!(strict.status.code(), Some(3));
    // Results are still written for inspection.
    assert!(dir.path().join("strict").join("rate.json").exists());
}

#[test]
fn bench_summary_is_reproducible_and_self_checking() {
    let dir = tempfile::tempdir().unwrap();
    let bench = |out: &str, extra: &[&str]| {
        bin()
            .args(["bench", "--quick", "--only", "1,6", "--out"])
            .arg(dir.path().join(out))
            .args(extra)
            .output()
            .unwrap()
    };
    let a = bench("a", &["--threads", "1"]);
    let b = bench("b", &["--threads", "3"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stdout));
    assert!(b.status.success());
    let sa = std::fs::read(dir.path().join("a/summary.csv")).unwrap();
    let sb = std::fs::read(dir.path().join("b/summary.csv")).unwrap();
    assert_eq!(sa, sb);

    let tol = dir.path().join("tol.json");
    std::fs::write(&tol, r#"{ "oracle_rel": 1e-12 }"#).unwrap();
    let c = bench("c", &["--tolerances", tol.to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(1));
    let summary = std::fs::read_to_string(dir.path().join("c/summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| l.contains(",false,")).count(), 1);
}
