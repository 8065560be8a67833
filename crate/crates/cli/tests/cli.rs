use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opaque-inv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn table2_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table2.json")
}

#[test]
fn cost_bounds_single_product() {
    let o = run(&[
        "analytic", "clb", "--n", "1", "--lambda", "10", "--mu", "10", "--q", "15", "--m", "2",
        "--r", "1", "--theta", "1",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((value(&text, "cost_lb ") - 0.2287).abs() < 5e-5);
    assert!((value(&text, "cost_ub ") - 0.4574).abs() < 5e-5);
}

#[test]
fn cost_bounds_pair() {
    let o = run(&[
        "analytic", "clb", "--n", "2", "--lambda", "10", "--mu", "10", "--q", "15", "--m", "2",
    ]);
    assert!(o.status.success());
    assert!((value(&stdout(&o), "cost_lb ") - 0.0465).abs() < 5e-5);
}

#[test]
fn relative_variance_values() {
    let o = run(&["analytic", "sigma-rel", "--p", "0", "--lambda", "4"]);
    assert!(stdout(&o).contains("sigma_rel_approx 1.000000"));
    let o = run(&[
        "analytic",
        "sigma-rel",
        "--p",
        "0.3",
        "--lambda",
        "4",
        "--exact",
    ]);
    let text = stdout(&o);
    let approx = value(&text, "sigma_rel_approx ");
    let exact = value(&text, "sigma_rel_exact ");
    assert!((approx - 0.209).abs() < 1e-3);
    assert!((exact - approx).abs() < 0.02);
}

#[test]
fn shortage_and_wastage() {
    let o = run(&[
        "analytic", "shortage", "--n", "1", "--lambda", "10", "--q", "15",
    ]);
    assert!((value(&stdout(&o), "expected_shortage ") - 0.103479).abs() < 1e-6);
    let o = run(&[
        "analytic", "wastage", "--n", "1", "--lambda", "10", "--q", "15", "--m", "2",
    ]);
    let text = stdout(&o);
    assert!((value(&text, "wastage_lb ") - 0.125206).abs() < 1e-6);
    assert!((value(&text, "wastage_ub ") - 0.250411).abs() < 1e-6);
}

#[test]
fn json_output_parses() {
    let o = run(&[
        "analytic", "clb", "--n", "4", "--lambda", "10", "--q", "15", "--m", "2", "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["cost_lb"].as_f64().unwrap() - 0.0042).abs() < 5e-5);
}

#[test]
fn threshold_search() {
    let o = run(&[
        "threshold",
        "--q",
        "15",
        "--m",
        "2",
        "--delta",
        "0.01",
        "--lambda",
        "10",
        "--mu",
        "10",
    ]);
    let text = stdout(&o);
    assert!(o.status.success());
    assert!(text.contains("sigma2_th 2.500000"));
    assert!(text.contains("n_th 4"));

    let o = run(&[
        "threshold",
        "--q",
        "18",
        "--m",
        "2",
        "--lambda",
        "10",
        "--n-max",
        "12",
    ]);
    let text = stdout(&o);
    assert!(text.contains("none <= n_max (12)"));
    assert_eq!(text.lines().filter(|l| l.contains(',')).count(), 13);

    let o = run(&["threshold", "--q", "18", "--m", "2", "--lambda", "10"]);
    let text = stdout(&o);
    assert!(text.contains("n_th 15"));
    assert!(value(&text, "sigma2_th ") < 0.83);

    let o = run(&[
        "threshold",
        "--q",
        "15",
        "--m",
        "2",
        "--lambda",
        "10",
        "--delta",
        "10",
    ]);
    assert!(stdout(&o).contains("n_th 2"));
}

#[test]
fn missing_base_stock_is_usage_error() {
    let o = run(&[
        "simulate",
        "--n",
        "1",
        "--p",
        "0",
        "--lambda",
        "10",
        "--m",
        "2",
        "--periods",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--q"));
}

#[test]
fn invalid_values_are_usage_errors() {
    let o = run(&[
        "analytic", "clb", "--n", "1", "--lambda", "-1", "--q", "15", "--m", "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "simulate", "--n", "1", "--p", "1.5", "--lambda", "10", "--m", "2", "--q", "15",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["reproduce", "fig-unknown"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["analytic", "clb", "--n", "one"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let o = run(&[
        "simulate",
        "--n",
        "1",
        "--p",
        "0",
        "--lambda",
        "10",
        "--m",
        "2",
        "--q",
        "15",
        "--periods",
        "300",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--config", "/nonexistent-dir/cfg.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_scenario_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&[
        "simulate",
        "--n",
        "1",
        "--p",
        "0",
        "--lambda",
        "10",
        "--mu",
        "10",
        "--m",
        "2",
        "--q",
        "15",
        "--periods",
        "10000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == "mean_cost").unwrap();
    let cost: f64 = row[idx].parse().unwrap();
    assert!((0.27..=0.33).contains(&cost), "{cost}");
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn table_config_gives_twenty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2.csv");
    let o = run(&[
        "simulate",
        "--config",
        table2_config().to_str().unwrap(),
        "--seed",
        "42",
        "--periods",
        "1000",
        "--reps",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n": 1, "lambda": 10, "q": 15, "m": 2, "mu": 10}"#).unwrap();
    let base = run(&["analytic", "clb", "--config", cfg.to_str().unwrap()]);
    assert!((value(&stdout(&base), "cost_lb ") - 0.2287).abs() < 5e-5);
    let over = run(&[
        "analytic",
        "clb",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "2",
    ]);
    assert!((value(&stdout(&over), "cost_lb ") - 0.0465).abs() < 5e-5);

    std::fs::write(&cfg, r#"{"n": 1, "lambda": 10, "qq": 15}"#).unwrap();
    let typo = run(&["analytic", "clb", "--config", cfg.to_str().unwrap()]);
    assert_eq!(typo.status.code(), Some(2));
}

#[test]
fn seed_fixes_output_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = vec![];
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.csv"));
        let o = run(&[
            "simulate",
            "--n",
            "1,2,4",
            "--p",
            "0,0.5,1",
            "--lambda",
            "10",
            "--m",
            "2,3",
            "--q",
            "15",
            "--periods",
            "1500",
            "--reps",
            "2",
            "--seed",
            "9",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);

    let out = dir.path().join("env.csv");
    let o = bin()
        .args([
            "simulate", "--n", "1,2,4", "--p", "0,0.5,1", "--lambda", "10", "--m", "2,3", "--q",
            "15",
        ])
        .args([
            "--periods",
            "1500",
            "--reps",
            "2",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("OPAQUE_INV_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), files[0]);
}

#[test]
fn reproduce_table_writes_named_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "reproduce",
        "table2",
        "--periods",
        "1000",
        "--reps",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[0].ends_with("threshold_cell"));
    // analytic columns do not depend on the simulation settings
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&first[..3], &["2", "15.000000", "1"]);
    assert_eq!(first[6], "0.228684");
    // the (m=2, q=18) block never drops below delta for n <= 12
    assert_eq!(lines.iter().filter(|l| l.ends_with(",1")).count(), 3);
}

#[test]
fn reproduce_figure_presets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["reproduce", "fig-cv", "--periods", "300", "--out", d]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("fig_cv.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 6 * 21
    );
    let o = run(&["reproduce", "fig-npr", "--periods", "300", "--out", d]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("fig_npr.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 12 * 21
    );
    let o = run(&[
        "reproduce",
        "fig-cost",
        "--m",
        "3",
        "--periods",
        "300",
        "--out",
        d,
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("fig_cost_m3.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v.as_array().unwrap().len(), 11 * 31);
    assert!(!dir.path().join("fig_cost_m2.json").exists());
}

#[test]
fn verbose_echoes_resolved_config() {
    let o = run(&[
        "analytic", "shortage", "--n", "1", "--lambda", "10", "--q", "15", "-v",
    ]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("\"mu\": 10.0"), "{err}");
    assert!(err.contains("\"q\""));
}
