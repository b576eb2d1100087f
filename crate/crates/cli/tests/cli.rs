use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use colored_drift::experiments::{ReplicationPlan, RunConfig};

const OU1D: &str = r#"{
  "model": {"kind": "additive", "theta": [[1.0]], "G": [[1.0]], "A": [[1.0]], "sigma": [[1.0]], "epsilon": 0.1},
  "grid": {"T": 5.0, "h_rule": "eps_cubed"},
  "filter": {"delta": 1.0, "scheme": "exact-exponential"},
  "estimator": {"variants": ["mle", "mle-filtered", "sgdct-filtered"], "lr": {"a": 4.0, "b": 1.0}},
  "experiment": {"checkpoints": {"rule": "every", "interval": 1.0}}
}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colored-drift"))
        .args(args)
        .env_remove("COLORED_DRIFT_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_reproducible_and_records_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou1d.json", OU1D);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = cli(&["simulate", "--config", &cfg, "--seed", "42", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["path.csv", "metadata.json", "config.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let meta = json(&a.join("metadata.json"));
    assert_eq!(meta["h"], 0.001);
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["n_steps"], 5000);
    assert_eq!(meta["model_hash"].as_str().unwrap().len(), 64);
    let header = fs::read_to_string(a.join("path.csv")).unwrap();
    assert!(header.starts_with("t,X1,Y1,Z1\n"));

    let other = tmp.path().join("c");
    let out = cli(&["simulate", "--config", &cfg, "--seed", "43", "--out", other.to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(fs::read(a.join("path.csv")).unwrap(), fs::read(other.join("path.csv")).unwrap());
    assert_eq!(json(&other.join("metadata.json"))["model_hash"], meta["model_hash"]);
}

#[test]
fn resolved_config_materializes_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let levy = r#"{"model": {"kind": "levy", "theta": 1.0, "alpha": 1.0, "gamma": 1.0, "kappa": 1.0, "beta": 1.0, "epsilon": 0.1},
                  "grid": {"T": 1.0, "h_rule": "eps_cubed"}}"#;
    let cfg = write(tmp.path(), "levy.json", levy);
    let out = cli(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let echoed = json(&tmp.path().join("config.json"));
    assert_eq!(echoed["model"]["eta"], 1.0);
    assert_eq!(echoed["experiment"]["base_seed"], 1);
    assert_eq!(echoed["grid"]["h"], 0.001);
}

#[test]
fn schema_errors_are_line_anchored() {
    let tmp = tempfile::tempdir().unwrap();
    let no_delta = OU1D.replace(r#""delta": 1.0, "#, "");
    let cfg = write(tmp.path(), "bad.json", &no_delta);
    let out = cli(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("line 4") && msg.contains("delta"), "{msg}");

    let unknown = OU1D.replace(r#""T": 5.0"#, r#""T": 5.0, "dt": 1"#);
    let cfg = write(tmp.path(), "unknown.json", &unknown);
    let msg = stderr(&cli(&["simulate", "--config", &cfg]));
    assert!(msg.contains("line 3") && msg.contains("dt"), "{msg}");
}

#[test]
fn filtered_variant_without_filter_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let text = OU1D.replace(r#""filter": {"delta": 1.0, "scheme": "exact-exponential"},"#, "");
    let cfg = write(tmp.path(), "nofilter.json", &text);
    let out = cli(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("needs a filter block with delta"), "{}", stderr(&out));
}

#[test]
fn simulate_then_estimate_matches_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou1d.json", OU1D);
    let out_dir = tmp.path().to_str().unwrap();
    let out = cli(&["simulate", "--config", &cfg, "--seed", "9", "--out", out_dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let path_csv = tmp.path().join("path.csv");
    let out = cli(&["estimate", "--config", &cfg, "--out", out_dir, path_csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let mut resolved = RunConfig::from_json(OU1D).unwrap().resolve().unwrap();
    resolved.experiment.base_seed = 9;
    let plan = ReplicationPlan::from_config(&resolved).unwrap();
    let runs = plan.run_one(9).unwrap();
    let report = json(&tmp.path().join("estimate.json"));
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 3);
    for (run, est) in runs.iter().zip(estimates) {
        let run = run.as_ref().unwrap();
        let expected = run.values.last().unwrap().as_ref().unwrap()[0];
        let got = est["value"][0].as_f64().unwrap();
        assert_eq!(got.to_bits(), expected.to_bits(), "{}", est["variant"]);
        let csv = fs::read_to_string(tmp.path().join(format!("path_{}.csv", est["variant"].as_str().unwrap()))).unwrap();
        assert_eq!(csv.lines().count(), run.times.len() + 1);
    }
    assert!(estimates[1]["condition_number"].as_f64().unwrap() >= 1.0);
    assert!(estimates[2]["condition_number"].is_null());
}

#[test]
fn levy_variant_needs_two_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ou1d.json", OU1D);
    let out = cli(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let path_csv = tmp.path().join("path.csv");
    let out = cli(&["estimate", "--config", &cfg, "--variant", "mle-levy", path_csv.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("dimension"), "{}", stderr(&out));
}

#[test]
fn unknown_experiment_lists_available_names() {
    let out = cli(&["experiment", "bogus"]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    for name in ["additive-1d", "additive-2d", "levy", "clt", "identities", "convergence-rate"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn experiment_overrides_tag_the_bundle_and_set_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let short = r#"{
      "model": {"kind": "additive", "theta": [[2.0, 1.0], [1.0, 2.0]], "G": [[1.0, 0.0], [0.0, 1.0]],
                "A": [[1.0, 1.0], [-1.0, 1.0]], "sigma": [[1.0, 0.0], [0.0, 1.0]], "epsilon": 0.1},
      "grid": {"T": 1.0, "h_rule": "eps_cubed"},
      "filter": {"delta": 1.0},
      "estimator": {"variants": ["mle-filtered"]},
      "experiment": {"M": 2}
    }"#;
    let cfg = write(tmp.path(), "short.json", short);
    let dir = tmp.path().join("bundle");
    let out = cli(&[
        "experiment", "additive-2d", "--config", &cfg, "--eps", "0.05", "--threads", "1", "--out", dir.to_str().unwrap(),
    ]);
    // one unit of time is far too short to recover the drift
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL recovery-")), "{stdout}");
    let verdict = json(&dir.join("verdict.json"));
    assert_eq!(verdict["tag"], "eps=0.05");
    assert_eq!(verdict["passed"], false);
    assert!(dir.join("colored_eps0.05_mle-filtered.csv").exists());
}

#[test]
fn clt_bundle_reports_predicted_variance() {
    let tmp = tempfile::tempdir().unwrap();
    let small = OU1D.replace(r#""T": 5.0"#, r#""T": 2.0"#);
    let cfg = write(tmp.path(), "clt.json", &small);
    let dir = tmp.path().join("clt");
    let out = cli(&["experiment", "clt", "--config", &cfg, "--replications", "4", "--out", dir.to_str().unwrap()]);
    assert!(out.status.code().is_some_and(|c| c <= 1), "{}", stderr(&out));
    for variant in ["mle-filtered", "sgdct-filtered"] {
        let sample = json(&dir.join(format!("clt_{variant}.json")));
        assert_eq!(sample["predicted_variance"], 4.0);
        assert_eq!(sample["samples"].as_array().unwrap().len(), 4);
        assert!(!sample["bins"]["counts"].as_array().unwrap().is_empty());
    }
}

#[test]
fn passing_experiment_exits_zero_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let out = cli(&["experiment", "convergence-rate", "--replications", "20", "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}\n{}", String::from_utf8_lossy(&out.stdout), stderr(&out));
    let b = tmp.path().join("b");
    let echoed = a.join("config.json");
    let out = cli(&["experiment", "convergence-rate", "--config", echoed.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success());
    for name in ["convergence.csv", "convergence.json", "config.json", "verdict.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}
