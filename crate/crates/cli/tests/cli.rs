use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use pomdp_ope::data::load_dataset;
use pomdp_ope_cli::config::ExperimentConfig;
use pomdp_ope_cli::report::slope_fits;
use pomdp_ope_cli::{load_experiment, run, run_experiment};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pomdp-ope"));
    c.stdout(Stdio::null());
    c
}

fn small_config() -> String {
    r#"{
      "spec_version": "1",
      "model": { "random": { "n_states": 2, "n_obs": 3, "n_actions": 2, "gamma": 0.8, "seed": 3 } },
      "behavior": "uniform",
      "evaluation": { "random": { "uniform_mix": 0.3, "seed": 4 } },
      "window": { "m": 0, "m_h": 1, "m_f": 1 },
      "estimators": [
        { "kind": "minimax_linear" },
        { "kind": "minimax_rkhs", "alpha": 0.01, "alpha_prime": 0.01, "kernel": "linear" },
        { "kind": "sis", "horizon_cap": 10 }
      ],
      "n_grid": [200, 400],
      "seeds": [1, 2]
    }"#
    .to_string()
}

#[test]
fn empty_estimator_list_is_rejected() {
    let text = small_config().replace(
        r#"[
        { "kind": "minimax_linear" },
        { "kind": "minimax_rkhs", "alpha": 0.01, "alpha_prime": 0.01, "kernel": "linear" },
        { "kind": "sis", "horizon_cap": 10 }
      ]"#,
        "[]",
    );
    let cfg = ExperimentConfig::from_json_str(&text).unwrap();
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("at least one estimator"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, text).unwrap();
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least one estimator"));
}

#[test]
fn schema_is_strict_and_versioned() {
    let bad_version = small_config().replace(r#""spec_version": "1""#, r#""spec_version": "0""#);
    assert!(ExperimentConfig::from_json_str(&bad_version).unwrap().validate().is_err());
    let unknown = small_config().replace(r#""seeds""#, r#""typo": 1, "seeds""#);
    assert!(ExperimentConfig::from_json_str(&unknown).is_err());
    let unsorted = small_config().replace("[200, 400]", "[400, 200]");
    assert!(ExperimentConfig::from_json_str(&unsorted).unwrap().validate().is_err());
    let missing = small_config().replace(r#""behavior": "uniform""#, r#""behavior": { "path": "nope.json" }"#);
    let err = ExperimentConfig::from_json_str(&missing).unwrap().resolve(Path::new("/nonexistent"));
    assert!(err.is_err());
}

#[test]
fn reruns_are_byte_identical_and_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("POMDP_OPE_JOBS", jobs)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("results.csv")).unwrap());
        assert!(out.join("results.jsonl").exists());
        assert!(out.join("report.md").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn seed_override_replaces_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let out = dir.path().join("o");
    let st = bin()
        .args(["sweep", "--seed-override", "77", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert!(!seeds.is_empty() && seeds.iter().all(|s| *s == "77"));
}

#[test]
fn mdp_reduction_lstd_row_matches() {
    let exp = load_experiment(&scenario("mdp-reduction")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&exp, dir.path(), false).unwrap();
    let eq: Vec<_> = res.rows.iter().filter(|r| r.estimator == "lstd_vs_minimax_linear").collect();
    assert!(!eq.is_empty());
    for r in eq {
        assert_eq!(r.status, "ok");
        assert!(r.reference_diff.unwrap() < 1e-10, "{r:?}");
    }
}

#[test]
fn diagnose_flags_observability_failure() {
    let out = bin()
        .stdout(Stdio::piped())
        .args(["diagnose", "--config"])
        .arg(scenario("rank-deficient"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("observability: FAILS"), "{text}");

    let exp = load_experiment(&scenario("rank-deficient")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&exp, dir.path(), false).unwrap();
    assert!(res.report.contains("Observability fails"));
}

#[test]
fn simulate_zero_gives_valid_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    let st = bin()
        .args(["simulate", "--n", "0", "--config"])
        .arg(scenario("tabular"))
        .arg("--out")
        .arg(&path)
        .status()
        .unwrap();
    assert!(st.success());
    let ds = load_dataset::<usize, usize>(&path).unwrap();
    assert_eq!(ds.n(), 0);
    assert_eq!(ds.n_init(), 0);
}

#[test]
fn estimate_on_simulated_file_matches_sweep_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, small_config()).unwrap();
    let data = dir.path().join("d.jsonl");
    let st = bin()
        .args(["simulate", "--n", "200", "--seed-override", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();
    assert!(st.success());
    let exp = load_experiment(&cfg).unwrap();
    let ds = load_dataset(&data).unwrap();
    let rows = run::estimate(&exp, &ds, "h").unwrap();
    let swept = run::sweep(&exp, "h");
    let a = rows.iter().find(|r| r.estimator == "minimax_linear").unwrap();
    let b = swept
        .iter()
        .find(|r| r.estimator == "minimax_linear" && r.n == 200 && r.seed == 1)
        .unwrap();
    assert_eq!(a.j_hat, b.j_hat);
    assert!(rows.iter().any(|r| r.estimator == "sis" && r.status.starts_with("error")));
}

#[test]
fn dynamics_command_matches_oracle_in_population() {
    let exp = load_experiment(&scenario("tabular")).unwrap();
    let rows = run::dynamics(&exp).unwrap();
    for r in rows.iter().filter(|r| r.source == "population") {
        assert_eq!(r.status, "ok");
        assert!((r.spectral.unwrap() - r.truth).abs() < 1e-8);
        assert!((r.minimax.unwrap() - r.truth).abs() < 1e-8);
    }
    assert!(rows.iter().any(|r| r.source.starts_with("empirical")));
}

#[test]
fn tabular_sweep_rate_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(scenario("tabular"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let exp = load_experiment(&scenario("tabular")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.jsonl")).unwrap();
    let rows: Vec<pomdp_ope_cli::ResultRow> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), exp.config.n_grid.len() * exp.config.seeds.len() * exp.config.estimators.len());
    let fit = slope_fits(&rows).into_iter().find(|f| f.estimator == "minimax_linear").unwrap();
    let slope = fit.slope.unwrap();
    assert!((-0.7..=-0.3).contains(&slope), "slope {slope}");
}
