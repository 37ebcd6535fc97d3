//! Binary-level checks: flag/config resolution, output locations, exit codes.

use std::process::Command;

fn qdopt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qdopt"))
}

#[test]
fn run_writes_outputs_and_reports_them() {
    let dir = tempfile::tempdir().unwrap();
    let output = qdopt()
        .args(["run", "--n", "8", "--max-iters", "10", "--mse-threshold", "0"])
        .args(["--out-dir", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(dir.path().join("run.csv").exists());
    assert!(dir.path().join("run_summary.json").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("run.csv"));
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.conf");
    std::fs::write(&config_path, "n=8\nmax_iters=5\nmse_threshold=0\n").unwrap();
    let out_a = dir.path().join("a");
    let status = qdopt()
        .args(["run", "--config", config_path.to_str().unwrap()])
        .args(["--out-dir", out_a.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_a.join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "5 iterations from the config file");

    // --max-iters beats the config file
    let out_b = dir.path().join("b");
    let status = qdopt()
        .args(["run", "--config", config_path.to_str().unwrap(), "--max-iters", "3"])
        .args(["--out-dir", out_b.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_b.join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let status = qdopt()
        .env("QDOPT_OUT_DIR", dir.path())
        .args(["run", "--n", "6", "--max-iters", "4", "--mse-threshold", "0"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("run.csv").exists());
}

#[test]
fn config_errors_exit_with_code_2() {
    let out = qdopt().args(["run", "--theta", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));

    let out = qdopt().args(["run", "--n", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // unknown key in a config file
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bad.conf");
    std::fs::write(&config_path, "frobnicate=1\n").unwrap();
    let out = qdopt()
        .args(["run", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_prints_a_single_number_each_way() {
    // delta = 0.5 with unit data variance needs unit noise variance
    let out = qdopt().args(["calibrate", "--delta", "0.5"]).output().unwrap();
    assert!(out.status.success());
    let beta: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((beta - 1.0).abs() < 1e-12);

    // and the inverse direction recovers the leakage
    let out = qdopt().args(["calibrate", "--sigma2-r", "1.0"]).output().unwrap();
    assert!(out.status.success());
    let mi: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((mi - 0.5).abs() < 1e-12);

    // asking for both at once is a usage error
    let out = qdopt()
        .args(["calibrate", "--delta", "0.5", "--sigma2-r", "1.0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rate_bound_validates_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = qdopt()
        .args(["rate-bound", "--delta-min", "2.0", "--delta-max", "1.0"])
        .args(["--out-dir", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let status = qdopt()
        .args(["rate-bound", "--out-dir", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("rate_bound.csv").exists());
}

#[test]
fn privacy_curve_level_ordering_is_stable_across_trial_counts() {
    use qdopt_cli::commands;
    use qdopt_cli::config::ExperimentConfig;

    let mut mean_nmi_per_trials = Vec::new();
    for trials in [100usize, 300] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig {
            trials,
            curve_iterations: 12,
            sigma2_list: vec![1.0, 1e2, 1e4],
            eavesdropper: true,
            out_dir: dir.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let graph = cfg.build_graph().unwrap();
        let target = (0..graph.n()).max_by_key(|&i| graph.degree(i)).unwrap();
        cfg.corrupted = graph.neighbors(target).iter().skip(1).map(|&j| j + 1).collect();
        cfg.designated = Some(target + 1);
        commands::cmd_privacy_curve(&cfg).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("privacy_curve.csv")).unwrap();
        let mut sums: std::collections::BTreeMap<String, (f64, usize)> = Default::default();
        for line in csv.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            let entry = sums.entry(cells[0].to_string()).or_default();
            entry.0 += cells[2].parse::<f64>().unwrap();
            entry.1 += 1;
        }
        let means: Vec<f64> = sums.values().map(|(s, n)| s / *n as f64).collect();
        mean_nmi_per_trials.push(means);
    }
    // per-level mean NMI orders identically at both trial counts:
    // the noisiest level reveals the least
    for means in &mean_nmi_per_trials {
        assert!(means[2] < means[1] && means[1] < means[0], "means {means:?}");
    }
}

#[test]
fn no_quantize_flag_runs_the_passthrough_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let status = qdopt()
        .args(["run", "--n", "8", "--max-iters", "10", "--mse-threshold", "0", "--no-quantize"])
        .args(["--out-dir", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    // passthrough introduces no quantization noise
    for line in csv.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap(), "0e0");
    }
}

#[test]
fn privacy_curve_without_qualifying_node_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    // no corrupted nodes: nothing qualifies, the error lists candidates
    let out = qdopt()
        .args(["privacy-curve", "--n", "8", "--trials", "5", "--curve-iterations", "2"])
        .args(["--eavesdropper", "--out-dir", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no honest node"));
}
