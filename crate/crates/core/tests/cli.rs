use std::process::{Command, Output};

use thermotier::harness::ExperimentConfig;

fn thermotier(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermotier"))
        .args(args)
        .output()
        .unwrap()
}

const SMALL: &str = "dataset_series = 4\ndataset_points = 2000\ndataset_days = 6\nsim_days = 4\nwarmup_days = 2\n\
                     templates_per_kind = 1\ndurations = 3600,21600\nlag = 24\ntrain_days = 1\nlstm_epochs = 1\n\
                     dtw_window = 64\nhorizons = 1,6,12\n";

#[test]
fn print_config_round_trips() {
    let out = thermotier(&["--print-config", "--seed", "42", "--policy", "lru"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let config = ExperimentConfig::from_text(&text).unwrap();
    assert_eq!(config.seed, 42);
    assert_eq!(config.to_text(), text);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "sim_days = banana\n").unwrap();
    let out = thermotier(&["run", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    assert_eq!(thermotier(&["run", "--policy", "MRU"]).status.code(), Some(1));
    assert_eq!(thermotier(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(thermotier(&[]).status.code(), Some(1));
    assert_eq!(thermotier(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = thermotier(&["ingest", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_outputs_and_report_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let out_dir = dir.path().join("out");
    let out = thermotier(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--policy",
        "TSCABINET",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.csv", "forecast_metrics.csv", "plan.log", "occupancy.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let report = out_dir.join("report.csv");
    let summary = thermotier(&["report", report.to_str().unwrap()]);
    assert!(summary.status.success());
    assert!(String::from_utf8_lossy(&summary.stdout).contains("TSCABINET"));
}

#[test]
fn sweep_rejects_unordered_capacities() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let out = thermotier(&[
        "sweep",
        "--config",
        conf.to_str().unwrap(),
        "--policy",
        "lru",
        "--capacity",
        "500,100",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let ok = thermotier(&[
        "sweep",
        "--config",
        conf.to_str().unwrap(),
        "--policy",
        "lru",
        "--capacity",
        "100,500",
    ]);
    assert!(ok.status.success());
    assert_eq!(
        String::from_utf8_lossy(&ok.stdout)
            .lines()
            .filter(|l| l.starts_with("LRU"))
            .count(),
        2
    );
}

#[test]
fn generated_workload_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let path = dir.path().join("workload.txt");
    let out = thermotier(&[
        "generate-workload",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read(&path).unwrap();
    let queries = thermotier::workload::read_workload(&text[..]).unwrap();
    assert!(!queries.is_empty());
}
