use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use viral_delay::cli::ConfigFile;
use viral_delay::experiments::{scenario, RunSpec, ScenarioName};
use viral_delay::integrator::IntegrationConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viral-delay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, config: &ConfigFile) -> String {
    let path = dir.join(name);
    std::fs::write(&path, config.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

fn e0_config(t_end: f64) -> ConfigFile {
    ConfigFile::from_scenario(
        &scenario(ScenarioName::E0),
        RunSpec { history: 0, lags: 0 },
        IntegrationConfig::new(0.01, t_end),
    )
}

fn s(p: PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn analyze_prints_both_modes() {
    let out = bin(&["analyze", "--scenario", "E2", "--lags", "5,4", "--mode", "paper"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("R0 = 1.727380428464363"), "{text}");
    assert!(text.contains("R1 = 5.369005454490303"), "{text}");
    let out = bin(&["analyze", "--scenario", "E2", "--lags", "5,4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("mode: derivation\n"));
    assert!(text.contains("R0 = 6.909521713857452"), "{text}");
}

#[test]
fn analyze_writes_summary_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "e0.json", &e0_config(10.0));
    let json = s(dir.path().join("a.json"));
    let out = bin(&["analyze", "--config", &config, "--out", &json]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(value["predicted_regime"]["derivation"], "E0");
    assert!(value["equilibria"]["e1"].is_null());
}

#[test]
fn simulate_from_fixed_point_repeats_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = e0_config(20.0);
    config.history = viral_delay::cli::HistorySpec::Constant {
        value: [5.0, 0.0, 0.0, 0.0, 0.0],
    };
    let path = write_config(dir.path(), "fixed.json", &config);
    let csv = s(dir.path().join("t.csv"));
    let out = bin(&["simulate", "--config", &path, "--out", &csv]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,y,c,v,z"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2001);
    for row in rows {
        let (_, state) = row.split_once(',').unwrap();
        assert_eq!(
            state,
            "5.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0"
        );
    }
}

#[test]
fn simulate_overrides_and_monitors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "e0.json", &e0_config(1000.0));
    let csv = s(dir.path().join("t.csv"));
    let out = bin(&[
        "simulate", "--config", &path, "--out", &csv, "--t-end", "10", "--dt", "0.02", "--monitors",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("t,x,y,c,v,z,L,B"));
    assert_eq!(text.lines().count(), 502);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last.len(), 8);
    assert_eq!(last[0], 10.0);
    assert!(last[6] >= 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = s(dir.path().join("t.csv"));

    // invalid configuration
    let mut config = e0_config(10.0);
    config.parameters.insert("h".into(), 0.0);
    let bad = write_config(dir.path(), "bad.json", &config);
    assert_eq!(bin(&["simulate", "--config", &bad, "--out", &csv]).status.code(), Some(1));
    let missing = s(dir.path().join("missing.json"));
    assert_eq!(bin(&["simulate", "--config", &missing, "--out", &csv]).status.code(), Some(1));
    std::fs::write(dir.path().join("garbage.json"), "{not json").unwrap();
    let garbage = s(dir.path().join("garbage.json"));
    assert_eq!(bin(&["certify", "--config", &garbage, "--out", &csv]).status.code(), Some(1));

    // invalid flags
    assert_eq!(bin(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&["sweep", "--scenario", "E9", "--tau1", "1", "--tau2", "1", "--out", &csv]).status.code(), Some(1));
    assert_eq!(bin(&["sweep", "--scenario", "E0", "--tau1", "3:1:1", "--tau2", "1", "--out", &csv]).status.code(), Some(1));
    let good = write_config(dir.path(), "good.json", &e0_config(10.0));
    assert_eq!(bin(&["simulate", "--config", &good, "--out", &csv, "--dt", "0.03"]).status.code(), Some(1));

    // numerical failure: a history beyond the blow-up threshold
    let mut config = e0_config(10.0);
    config.history = viral_delay::cli::HistorySpec::Constant {
        value: [1e13, 1.0, 1.0, 1.0, 1.0],
    };
    let huge = write_config(dir.path(), "huge.json", &config);
    let out = bin(&["simulate", "--config", &huge, "--out", &csv]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blew up"));

    // certificate failure: a run far too short to converge
    let short = write_config(dir.path(), "short.json", &e0_config(5.0));
    let report = s(dir.path().join("r.json"));
    let out = bin(&["certify", "--config", &short, "--out", &report]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL convergence_E0"), "{text}");
    assert!(text.contains("PASS boundedness"), "{text}");
}

#[test]
fn certify_report_is_sorted_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "e0.json", &e0_config(1000.0));
    let report = s(dir.path().join("r.json"));
    let out = bin(&["certify", "--config", &config, "--out", &report]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(&report).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut again = serde_json::to_string_pretty(&value).unwrap();
    again.push('\n');
    assert_eq!(again, text);
    let names: Vec<&str> = value["certificates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["cone_invariance", "convergence_E0", "boundedness", "L0_monotone"]);
    assert_eq!(value["classification"], "E0");
    assert_eq!(value["integration"]["config"]["dt"], 0.01);
}

#[test]
fn sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = s(dir.path().join("grid.csv"));
    let out = bin(&["sweep", "--scenario", "E1", "--tau1", "0:10:2.5", "--tau2", "3", "--out", &csv]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau1,tau2,r0_derivation,r1_derivation,r0_paper,r1_paper,predicted,observed");
    assert_eq!(lines.len(), 6);
    assert!(lines[3].starts_with("5.0000000000000000e0,3.0000000000000000e0,9.05923056411233"));
    assert!(lines[3].ends_with(",E2,"));

    let out = bin(&[
        "sweep", "--scenario", "E0", "--tau1", "5", "--tau2", "2:3:1", "--simulate", "--t-end", "300", "--out", &csv,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",E0,E0")), "{text}");
}

#[test]
fn reproduce_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = s(dir.path().join("a"));
    let b = s(dir.path().join("b"));
    for d in [&a, &b] {
        let out = bin(&["reproduce", "E0", "--out-dir", d, "--design", "figures", "--t-end", "300", "--svg"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 11);
    for name in names {
        let x = std::fs::read(Path::new(&a).join(&name)).unwrap();
        let y = std::fs::read(Path::new(&b).join(&name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&a).join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["design"], "figures");
    assert_eq!(summary["runs"].as_object().unwrap().len(), 5);
    assert_eq!(summary["all_passed"], true);
}
