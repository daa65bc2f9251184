use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn advaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advaug")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` except the run manifest and the phase timings,
/// which carry paths and clock readings.
fn payload(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir)
        .into_iter()
        .filter(|p| !["run.json", "timing.jsonl"].contains(&p.file_name().unwrap().to_str().unwrap()))
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn verify_duality_fifty_trials_passes_with_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("duality.json");
    let out = advaug(&["verify", "--suite", "duality", "--trials", "50", "--seed", "7", "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["suite"], "duality");
    assert_eq!(v["passed_trials"], 50);
    assert_eq!(v["all_pass"], true);
    assert_eq!(v["records"].as_array().unwrap().len(), 200);
}

#[test]
fn erm_model_is_accurate_on_the_source_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    assert_eq!(code(&advaug(&["gen", "--out", s(&data)])), 0);
    let out = advaug(&["train", "--data", s(&data.join("source_train.bin")), "--rounds", "0", "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("eval.json");
    let out = advaug(&[
        "eval",
        "--model",
        s(&run.join("model.adaw")),
        "--data",
        s(&data.join("source_test.bin")),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let acc = v["results"][0]["accuracy"].as_f64().unwrap();
    assert!(acc >= 0.9, "accuracy {acc}");
    assert_eq!(v["results"][0]["n"], 600);
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&advaug(&["gen", "--config", "identity-shift", "--out", s(d), "--csv"])), 0);
    }
    let (pa, pb) = (payload(&a), payload(&b));
    assert_eq!(pa.len(), 6);
    assert_eq!(pa, pb);
}

#[test]
fn train_is_byte_identical_across_runs_and_replayable_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for d in [&a, &b] {
        let out = advaug(&["train", "--rounds", "1", "--seed", "5", "--out", s(d)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(payload(&a), payload(&b));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 5);
    assert!(manifest["finished_unix"].as_f64().unwrap() >= manifest["started_unix"].as_f64().unwrap());

    // the manifest alone reproduces the run, in serial mode too
    let out = advaug(&["--serial", "train", "--config", s(&a.join("run.json")), "--out", s(&c)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(payload(&a), payload(&c));
}

#[test]
fn ensemble_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ens) = (dir.path().join("data"), dir.path().join("ens"));
    assert_eq!(code(&advaug(&["gen", "--out", s(&data)])), 0);
    let out = advaug(&["ensemble", "--rounds", "0", "--baseline", "--out", s(&ens)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = advaug(&[
        "eval",
        "--ensemble",
        s(&ens.join("manifest.json")),
        "--data",
        s(&data.join("source_test.bin")),
        s(&data.join("target_far.bin")),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&advaug(&["--help"])), 0);
    assert_eq!(code(&advaug(&["--version"])), 0);
    assert_eq!(code(&advaug(&[])), 1);
    assert_eq!(code(&advaug(&["frobnicate"])), 1);
    assert_eq!(code(&advaug(&["verify", "--suite", "nope"])), 1);
    assert_eq!(code(&advaug(&["train", "--config", "no-such-preset", "--out", "/tmp/x"])), 1);
    assert_eq!(code(&advaug(&["eval", "--model", "/no/such/model", "--data", "/no/such/data"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = advaug(&["train", "--gamma", "-1", "--out", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn mismatched_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    assert_eq!(code(&advaug(&["gen", "--out", s(&g)])), 0);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(g.join("run.json")).unwrap()).unwrap();
    let mut cfg = manifest["config"].clone();
    cfg["source"]["n_classes"] = 4.into();
    let cfg_path = dir.path().join("four_class.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = advaug(&[
        "train",
        "--config",
        s(&cfg_path),
        "--data",
        s(&g.join("source_train.bin")),
        "--out",
        s(&dir.path().join("t")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("m=4"));
}
