use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hawkes-lob"));
    c.env_remove("HAWKES_LOB_JOBS");
    c
}

fn run(dir: &Path, config: &Value, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let mut c = bin();
    c.arg(args[0]).arg("--config").arg(&path).args(&args[1..]);
    c.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn quick_calibration() -> Value {
    json!({"population_size": 16, "generations": 4, "restarts": 1, "knots": 2, "seed": 3})
}

fn scalar_model(alpha: f64, horizon: f64) -> Value {
    json!({"R": 1, "M": 1, "T": horizon, "knots": [0.0, horizon], "baseline_values": [[0.5, 0.5]],
           "alpha": [[[alpha]]], "tau": [[[0.5]]]})
}

const TICKS: &str = "timestamp,kind,price,volume
0.0,bid_quote,99.00,100
0.5,ask_quote,100.00,100
1.0,trade,101.00,50
2.0,trade,98.00,50
3.0,bid_quote,99.50,10
4.0,ask_quote,99.80,10
5.0,trade,99.80,5
6.0,trade,99.50,5
7.0,bid_quote,99.00,10
8.0,ask_quote,100.50,10
9.0,trade,100.50,0
";

#[test]
fn extract_fixture_counts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ticks.csv"), TICKS).unwrap();
    let config = json!({"output_dir": "out", "extract": {"ticks": "ticks.csv", "day": "2024-01-02", "include_passive": true,
        "session": {"open": 0.0, "close": 10.0}}});
    let o = run(dir.path(), &config, &["extract"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let meta: Value = serde_json::from_slice(&fs::read(dir.path().join("out/events/2024-01-02.json")).unwrap()).unwrap();
    assert_eq!(meta["counts"], json!([1, 1, 1, 1, 1, 1, 1, 1]));
    let rejects = fs::read_to_string(dir.path().join("out/rejects.csv")).unwrap();
    assert_eq!(rejects, "line,reason\n12,nonpositive volume\n");
    let stats = fs::read_to_string(dir.path().join("out/session_stats.csv")).unwrap();
    assert!(stats.starts_with("type,label,total,mean_per_day,sd_per_day,days\n1,buy_moves_offer,1,1.000000,0.000000,1\n"));
}

#[test]
fn missing_and_empty_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({"output_dir": "out", "extract": {"ticks": "nope.csv"}});
    let o = run(dir.path(), &config, &["extract"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["error"], "input_not_found");

    fs::write(dir.path().join("empty.csv"), "timestamp,kind,price,volume\n").unwrap();
    let config = json!({"output_dir": "out", "extract": {"ticks": "empty.csv", "session": {"open": 0.0, "close": 100.0}}});
    let o = run(dir.path(), &config, &["extract"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    let events = fs::read_to_string(dir.path().join("out/events/session.csv")).unwrap();
    assert_eq!(events, "type_index,timestamp_sec\n");

    let o = bin().args(["extract", "--config"]).arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_byte_identical_and_poisson_without_excitation() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({"output_dir": "out", "simulate": {"model": scalar_model(0.0, 4000.0), "days": ["d1"], "seed": 11}});
    assert_eq!(run(dir.path(), &config, &["simulate"]).status.code(), Some(0));
    let first = fs::read(dir.path().join("out/events/d1.csv")).unwrap();
    let first_meta = fs::read(dir.path().join("out/events/d1.sim.json")).unwrap();
    assert_eq!(run(dir.path(), &config, &["simulate"]).status.code(), Some(0));
    assert_eq!(first, fs::read(dir.path().join("out/events/d1.csv")).unwrap());
    assert_eq!(first_meta, fs::read(dir.path().join("out/events/d1.sim.json")).unwrap());
    let meta: Value = serde_json::from_slice(&first_meta).unwrap();
    let n = meta["counts"][0].as_f64().unwrap();
    assert!((n - 2000.0).abs() < 3.0 * 2000f64.sqrt(), "{n}");
    assert!(meta["generator"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn supercritical_simulation_warns() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({"output_dir": "out", "simulate": {"model": scalar_model(3.0, 1000.0), "days": ["d1"], "max_events": 500}});
    let o = run(dir.path(), &config, &["simulate"]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains("warning") && err.contains("trunc"), "{err}");
}

#[test]
fn config_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = json!({"output_dir": "out", "calibrate": {"options": {"alpha_bounds": [5.0, 1.0]}}});
    assert_eq!(run(dir.path(), &bad, &["calibrate"]).status.code(), Some(3));
    assert_eq!(run(dir.path(), &bad, &["calibrate", "--validate-config"]).status.code(), Some(3));
    let one = json!({"output_dir": "out", "stability": {"repeats": 1}});
    assert_eq!(run(dir.path(), &one, &["stability"]).status.code(), Some(3));
    let ok = json!({"output_dir": "out"});
    let o = run(dir.path(), &ok, &["diagnose", "--validate-config"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "config ok");
}

#[test]
fn missing_stage_outputs_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({"output_dir": "out", "calibrate": {"M": [1, 2]},
        "simulate": {"model": scalar_model(0.5, 500.0), "days": ["d1"]}});
    assert_eq!(run(dir.path(), &config, &["diagnose"]).status.code(), Some(4));
    assert_eq!(run(dir.path(), &config, &["simulate"]).status.code(), Some(0));
    let o = run(dir.path(), &config, &["diagnose"]);
    assert_eq!(o.status.code(), Some(4));
    let err: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    let missing: Vec<String> = err["missing"].as_array().unwrap().iter().map(|p| p.as_str().unwrap().to_string()).collect();
    assert_eq!(missing.len(), 2);
    assert!(missing[0].ends_with("d1_M1.json") && missing[1].ends_with("d1_M2.json"));
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn staged_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "output_dir": "out",
        "simulate": {"model": scalar_model(0.8, 2000.0), "days": ["2024-01-02", "2024-01-03"], "seed": 1},
        "calibrate": {"M": [1, 2], "options": quick_calibration()},
        "stability": {"repeats": 2},
        "report": {"window": 300.0, "session_open": 32400.0}
    });
    for cmd in ["simulate", "calibrate", "diagnose", "report", "stability"] {
        let o = run(dir.path(), &config, &[cmd, "--jobs", "2"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    let root = dir.path().join("out");
    let fit_path = root.join("fits/2024-01-02_M1.json");
    let fit_bytes = fs::read(&fit_path).unwrap();
    let fit: Value = serde_json::from_slice(&fit_bytes).unwrap();
    assert!(fit.get("wall_time").is_none());
    assert!(root.join("fits/2024-01-02_M1.timing.json").exists());
    let n = fit["branching_ratio"][0][0].as_f64().unwrap();
    assert!(n > 0.2 && n < 0.6, "{n}");

    // resumable: no recomputation without --force
    let timing = fs::read(root.join("fits/2024-01-02_M1.timing.json")).unwrap();
    let modified = fs::metadata(&fit_path).unwrap().modified().unwrap();
    assert_eq!(run(dir.path(), &config, &["calibrate"]).status.code(), Some(0));
    assert_eq!(fs::metadata(&fit_path).unwrap().modified().unwrap(), modified);
    assert_eq!(fs::read(root.join("fits/2024-01-02_M1.timing.json")).unwrap(), timing);
    // forced recomputation reproduces the data bytes
    assert_eq!(run(dir.path(), &config, &["calibrate", "--force"]).status.code(), Some(0));
    assert_eq!(fs::read(&fit_path).unwrap(), fit_bytes);

    let goodness = read(&root, "diagnostics/goodness.csv");
    let lines: Vec<&str> = goodness.lines().collect();
    assert_eq!(lines[0], "M,KS_H0,KS_p,ED_H0,ED_p,LBQ_H0,LBQ_p,KPSS_H0,KPSS_p");
    assert_eq!(lines.len(), 3);
    assert!(read(&root, "diagnostics/tests.csv").starts_with("day,target,M,test,statistic,p_value,accept\n2024-01-02,1,1,KS,"));
    assert!(read(&root, "diagnostics/branching.csv").contains("\n1,1,"));
    assert!(read(&root, "stability/stability.csv").starts_with("M,KS_H0,KS_p,"));
    assert_eq!(read(&root, "stability/samples.csv").lines().count(), 1 + 2 * 2 * 4);
    assert!(read(&root, "report/hourly.csv").starts_with("hour,type,mean,sd\n9,1,"));
    assert!(read(&root, "report/branching_box.csv").starts_with("group,M,type,count,median,q1,q3,lower_whisker,upper_whisker,outliers\n"));
    assert_eq!(read(&root, "report/intensity_2024-01-02.csv").lines().count(), 1 + 7);
    assert!(read(&root, "report/baseline_means.csv").starts_with("M,type,mean,std,days\n"));
}

#[test]
fn single_day_tables_have_one_row_without_sd() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "output_dir": "out",
        "simulate": {"model": scalar_model(0.5, 1000.0), "days": ["only"]},
        "calibrate": {"M": [1], "options": quick_calibration()}
    });
    for cmd in ["simulate", "calibrate", "diagnose"] {
        assert_eq!(run(dir.path(), &config, &[cmd]).status.code(), Some(0));
    }
    let root: PathBuf = dir.path().join("out");
    assert_eq!(read(&root, "diagnostics/goodness.csv").lines().count(), 2);
    let branching = read(&root, "diagnostics/branching.csv");
    let row: Vec<&str> = branching.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "");
    assert_eq!(row[4], "1");
}
