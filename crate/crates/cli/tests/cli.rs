use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use redflag::synth::{self, SynthSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_redflag"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Small synthetic data set with a one-to-two dimension sweep.
fn small_case(dir: &Path) -> PathBuf {
    synth::write(dir, &SynthSpec { authorities: 60, ..SynthSpec::default() }).unwrap();
    let cfg = dir.join("config.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("d_max = 3", "d_max = 2");
    fs::write(&cfg, text).unwrap();
    cfg
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_case(dir.path());
    let out = dir.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--threads", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "ingest/contracts.jsonl",
        "flags/indicators.csv",
        "discretize/categories.csv",
        "screen/spearman_pairs.csv",
        "fit/fit_d1.json",
        "fit/fit_d2.json",
        "select/selection.csv",
        "report/rotated_d2.csv",
        "report/irt_summary_d1.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("FAILED").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_object().unwrap().len(), 7);
    assert_eq!(manifest["threads"], 2);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 7);
}

#[test]
fn stages_rerun_from_persisted_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_case(dir.path());
    let out = dir.path().join("out");
    for stage in ["ingest", "flags", "discretize"] {
        let o = run(&[stage, "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let first = fs::read(out.join("discretize/categories.csv")).unwrap();
    // rerunning one stage alone reproduces its artifact
    let o = run(&["run", "--stage", "discretize", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("discretize/categories.csv")).unwrap(), first);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_object().unwrap().len(), 3);
}

#[test]
fn failure_names_the_stage_and_leaves_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_case(dir.path());
    let out = dir.path().join("out");
    // fitting before anything was discretized
    let o = run(&["fit", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage fit failed"), "{err}");
    let marker = fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.starts_with("stage: fit"), "{marker}");
    // a later successful run clears the marker
    let o = run(&["ingest", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success());
    assert!(!out.join("FAILED").exists());
}

#[test]
fn malformed_input_fails_in_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_case(dir.path());
    let award = dir.path().join("award.csv");
    let mut text = fs::read_to_string(&award).unwrap();
    text.push_str("CIG000001,AWX,2017-13-45,10.00,meat,1,1,0\n");
    fs::write(&award, text).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage ingest failed") && err.contains("award_date"), "{err}");
}

#[test]
fn bad_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_case(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("d_min = 1", "d_min = 0");
    fs::write(&cfg, text).unwrap();
    let o = run(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d_min"));
    let o = run(&["run", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_case(dir.path());
    let out = dir.path().join("out");
    let o = run(&["ingest", "--config", s(&cfg), "--out", s(&out), "--seed", "99"]);
    assert!(o.status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}
