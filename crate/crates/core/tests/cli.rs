//! Integration tests for the command-line surface: stage chaining, artifact
//! determinism, error formatting, and flag handling.

use std::path::Path;
use std::process::{Command, Output};

fn cellqos(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellqos"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn version_prints_build_identifier() {
    let dir = tempfile::tempdir().unwrap();
    let output = cellqos(&["--version"], dir.path());
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.starts_with("cellqos "), "unexpected version line {text:?}");
}

#[test]
fn pipeline_produces_report_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--in",
        "data",
        "--out",
        "out",
        "--seed",
        "3",
    ];

    let synth = cellqos(&[&base[..], &["synth"]].concat(), dir.path());
    assert!(synth.status.success(), "synth failed: {}", String::from_utf8_lossy(&synth.stderr));

    // Config file tuned down for test speed; flags must win over it.
    std::fs::write(
        dir.path().join("run.conf"),
        "train_n_estimators = 25\ntrain_depth = 4\nsynth_n_cities = 2\nseed = 99\n",
    )
    .unwrap();
    let args = [&base[..], &["--config", "run.conf", "pipeline"]].concat();
    let run = cellqos(&args, dir.path());
    assert!(run.status.success(), "pipeline failed: {}", String::from_utf8_lossy(&run.stderr));

    let text = stdout(&run);
    // Resolved configuration is logged, with the flag overriding the file.
    assert!(text.contains("config seed=3"), "missing/incorrect config log:\n{text}");
    assert!(text.contains("config train_n_estimators=25"));
    assert!(text.contains("evaluate: combined_train"));
    assert!(text.contains("evaluate: combined_test"));

    let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.starts_with("scope,instances,mape,p_theta"));
    assert!(report.contains("combined_train"));
    assert!(report.contains("combined_test"));

    // Re-running the whole pipeline reproduces every artifact byte for byte.
    let model_before = std::fs::read(dir.path().join("out/model.json")).unwrap();
    let features_before = std::fs::read(dir.path().join("out/features.csv")).unwrap();
    let report_before = std::fs::read(dir.path().join("out/report.csv")).unwrap();
    let rerun = cellqos(&args, dir.path());
    assert!(rerun.status.success());
    assert_eq!(model_before, std::fs::read(dir.path().join("out/model.json")).unwrap());
    assert_eq!(features_before, std::fs::read(dir.path().join("out/features.csv")).unwrap());
    assert_eq!(report_before, std::fs::read(dir.path().join("out/report.csv")).unwrap());
}

#[test]
fn artifacts_identical_at_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.conf"),
        "synth_n_cities = 3\nsynth_sites_per_city = 10\ntrain_n_estimators = 20\ntrain_depth = 3\n",
    )
    .unwrap();
    let synth = cellqos(
        &["--config", "run.conf", "--in", "data", "--out", "out1", "synth"],
        dir.path(),
    );
    assert!(synth.status.success());

    for (out, threads) in [("out1", "1"), ("out4", "4")] {
        let run = cellqos(
            &["--config", "run.conf", "--in", "data", "--out", out, "--threads", threads, "pipeline"],
            dir.path(),
        );
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    for artifact in ["features.csv", "model.json", "report.csv", "neighbors.csv", "weights.csv"] {
        let one = std::fs::read(dir.path().join("out1").join(artifact)).unwrap();
        let four = std::fs::read(dir.path().join("out4").join(artifact)).unwrap();
        assert_eq!(one, four, "{artifact} differs between thread counts");
    }
}

#[test]
fn neighbors_export_has_rule_tags() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--in", "data", "--out", "out", "--seed", "5"];
    assert!(cellqos(&[&base[..], &["synth"]].concat(), dir.path()).status.success());
    assert!(cellqos(&[&base[..], &["neighbors"]].concat(), dir.path()).status.success());

    let edges = std::fs::read_to_string(dir.path().join("out/neighbors.csv")).unwrap();
    let mut lines = edges.lines();
    assert_eq!(
        lines.next().unwrap(),
        "cell_name,neighbor_name,distance_m,bearing_deg,is_interferer,rule"
    );
    let mut interferer_seen = false;
    let mut plain_neighbor_seen = false;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6, "bad edge line {line:?}");
        match fields[4] {
            "true" => {
                assert!(["R1", "R2", "R3"].contains(&fields[5]), "bad rule {line:?}");
                interferer_seen = true;
            }
            "false" => {
                assert!(fields[5].is_empty());
                plain_neighbor_seen = true;
            }
            other => panic!("bad is_interferer {other:?}"),
        }
    }
    assert!(interferer_seen && plain_neighbor_seen);
}

#[test]
fn stage_failure_is_single_machine_parsable_line() {
    let dir = tempfile::tempdir().unwrap();
    // No input data: ingest must fail cleanly.
    let output = cellqos(&["--in", "nowhere", "--out", "out", "ingest"], dir.path());
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "expected a single error line, got {stderr:?}");
    assert!(lines[0].starts_with("error stage=ingest message=\""), "got {stderr:?}");

    // Unknown config key is also a clean failure.
    std::fs::write(dir.path().join("bad.conf"), "no_such_key = 1\n").unwrap();
    let output = cellqos(&["--config", "bad.conf", "ingest"], dir.path());
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("no_such_key"));
}

#[test]
fn kpi_stage_exports_zero_for_saturated_low_throughput_cell() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("data")).unwrap();

    // A hand-built single-cell dataset: all volume below 100 Mbps and an
    // empty last slot, so the exported KPI at x = 100 must be exactly 0.
    let header = "cell_name,site_id,operator,city,longitude,latitude,azimuth,height,duplex_mode,dl_narfcn,frequency_band,dl_bandwidth,txrx_mode,subframe_assignment,special_patterns,dl_prb_avail,dl_prb_usage,ul_prb_avail,online_users,dl_concurrent_users,ul_concurrent_users,dl_traffic,ul_traffic,total_traffic";
    std::fs::write(
        dir.path().join("data/cells.csv"),
        format!("{header}\nS1_C1,S1,OpA,Town,30,40,0,20,TDD,636000,n78,100,4T4R,SA2,SSP7,273,50,273,10,2,1,100,10,110\n"),
    )
    .unwrap();
    std::fs::write(dir.path().join("data/split.csv"), "city,operator,split\nTown,OpA,train\n").unwrap();
    let bins: Vec<String> = (1..=14).map(|i| format!("bin_{i}")).collect();
    std::fs::write(
        dir.path().join("data/throughput.csv"),
        format!("cell_name,{}\nS1_C1,10,20,5,0,0,0,0,0,0,65,0,0,0,0\n", bins.join(",")),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("data/slots.csv"),
        "cell_name,slot_1,slot_2,slot_3\nS1_C1,30,70,0\n",
    )
    .unwrap();

    let output = cellqos(&["--in", "data", "--out", "out", "--x", "100", "kpi"], dir.path());
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let kpi = std::fs::read_to_string(dir.path().join("out/kpi.csv")).unwrap();
    assert!(kpi.contains("S1_C1,100,0"), "kpi export:\n{kpi}");
}
