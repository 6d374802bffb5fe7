use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn membrane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membrane")).args(args).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn b2star_run_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("b2");
    let out = membrane(&["b2star", "--out", &out_arg(&dir), "--shape", "ball", "--d", "2", "--h", "1/16", "--K", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    assert_eq!(m["pass"], Value::Bool(true));
    assert_eq!(m["recipe"], "b2star");
    assert!(String::from_utf8_lossy(&out.stdout).lines().any(|l| l.starts_with("PASS")));
}

#[test]
fn manifest_lists_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("thomee");
    let out = membrane(&["thomee", "--out", &out_arg(&dir), "--h", "1/8,1/16,1/32"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let m = manifest(&dir);
    let mut listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut present: Vec<String> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    present.sort();
    assert_eq!(listed, present);
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::metadata(dir.join(f["path"].as_str().unwrap())).unwrap().len();
        assert_eq!(f["bytes"].as_u64(), Some(bytes));
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    assert!(m["config"]["params"].is_object());
}

#[test]
fn single_thread_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = membrane(&[
            "--threads", "1", "--seed", "5", "max-scaling", "--out", &out_arg(&dir), "--N", "8,16", "--count", "40",
        ]);
        assert!(out.status.code().is_some_and(|c| c <= 1));
        fs::read(dir.join("maxima.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(membrane(&["no-such-recipe"]).status.code(), Some(2));
    assert_eq!(membrane(&["sample", "--d", "2"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("stray.txt"), "x").unwrap();
    let out = membrane(&["sample", "--out", &out_arg(tmp.path()), "--shape", "box", "--d", "2", "--N", "4", "--count", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn force_replaces_a_previous_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    let args = ["sample", "--out", dir.to_str().unwrap(), "--shape", "box", "--d", "2", "--N", "4", "--count", "2"];
    assert_eq!(membrane(&args).status.code(), Some(0));
    assert_eq!(membrane(&args).status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(membrane(&forced).status.code(), Some(0));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n\n[sample]\nshape = \"box\"\nd = 2\nN = 4\ncount = 3\n").unwrap();
    let dir = tmp.path().join("out");
    let out = membrane(&["--config", cfg.to_str().unwrap(), "sample", "--out", &out_arg(&dir), "--count", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.join("samples.json")).unwrap()).unwrap();
    assert_eq!(sidecar["shape"][0], 2);
    assert_eq!(manifest(&dir)["config"]["seed"], 3);
    let raw = fs::read(dir.join("samples.f64")).unwrap();
    assert_eq!(raw.len(), 8 * 2 * sidecar["shape"][1].as_u64().unwrap() as usize);
}

#[test]
fn recipe_catalog_is_listed() {
    let out = membrane(&["recipes"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["green", "sample", "thomee", "infvol", "b2star", "pair"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}
