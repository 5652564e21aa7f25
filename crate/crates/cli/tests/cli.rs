//! End-to-end checks of the compiled binary: file formats, override
//! precedence, sweep output, and the documented exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use pfclab_core::config::Config;
use pfclab_core::metrics::{compute_metrics, Metrics};
use pfclab_core::trace::read_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pfclab"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pfclab-cli-{}-{tag}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn run_round_trips_through_files() {
    let dir = scratch("round-trip");
    let trace_path = dir.join("trace.csv");
    let metrics_path = dir.join("metrics.kv");
    let config_text = format!(
        "# observer scenario, short\n\
         controller.mode = observer\n\
         sim.duration = 0.3\n\
         out.trace = {}\n\
         out.metrics = {}\n\
         scenario.name = cli-round-trip\n",
        trace_path.display(),
        metrics_path.display()
    );
    let config_path = dir.join("scenario.cfg");
    fs::write(&config_path, &config_text).unwrap();

    let output = bin()
        .arg("run")
        .arg(&config_path)
        .args(["--sim.stride", "20"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let trace = read_csv(fs::File::open(&trace_path).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(trace.len(), 30_000 / 20 + 1, "stride override was not applied");

    let mut cfg = Config::from_text(&config_text).unwrap();
    cfg.set_key("sim.stride", "20").unwrap();
    let sc = cfg.resolve().unwrap();
    let recomputed = compute_metrics(&trace, &sc).unwrap();
    let written = Metrics::from_kv(&fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert!(
        recomputed.same_bits(&written),
        "metrics file does not match the emitted trace"
    );

    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_writes_a_complete_index() {
    let dir = scratch("sweep");
    let output = bin()
        .arg("sweep")
        .args(["--controller.mode", "observer"])
        .args(["--sim.duration", "0.2"])
        .args(["--grid", "estimator.k=1e-3,3e-3"])
        .args(["--out-dir", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let index = fs::read_to_string(dir.join("index.csv")).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert_eq!(lines.len(), 3, "expected header plus two grid points");
    assert!(lines[0].starts_with("idx,estimator.k,status,"));
    assert!(lines[1].starts_with("0,1e-3,ok,"));
    assert!(lines[2].starts_with("1,3e-3,ok,"));

    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn oracle_reports_the_configured_target() {
    let output = bin().arg("oracle").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("V_s   = 200.0000 V"), "stdout was: {text}");
    assert!(text.contains("I_0   = 10.2852 A"), "stdout was: {text}");
}

#[test]
fn bad_config_exits_two() {
    let output = bin().args(["run", "--plant.bogus", "1"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = bin().args(["run", "--sim.duration", "0.05"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_three() {
    let output = bin()
        .args(["run", "--init.v", "0.5", "--sim.duration", "0.2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("numerical abort"), "stderr was: {stderr}");
}
