use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn nsps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsps")).args(args).output().unwrap()
}

fn benchmarks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_data_config(dir: &Path) -> PathBuf {
    let path = dir.join("data.json");
    let cfg = json!({ "max_len": 12, "seed": 4, "n_tasks": 12, "max_size": 7, "n_examples": 3 });
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_data_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = nsps(&["gen-data", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["train.jsonl", "valid.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let total = ["train", "valid", "test"].iter().map(|k| manifest[k].as_u64().unwrap()).sum::<u64>();
    assert_eq!(total, 12);
}

#[test]
fn enum_synth_solves_code_benchmark() {
    let b = benchmarks().join("cpt_codes.json");
    let o = nsps(&["synth", "--benchmark", s(&b), "--engine", "enum", "--max-size", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["solved"], json!(true));
    assert!(r["program"].as_str().unwrap().contains("ConstStr(\"]\")"));
}

#[test]
fn unsolved_search_exits_with_code_two() {
    let b = benchmarks().join("cpt_codes.json");
    let o = nsps(&["enum", "--benchmark", s(&b), "--max-size", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["status"], json!("not_found"));
}

#[test]
fn missing_input_is_a_config_error() {
    let o = nsps(&["synth", "--benchmark", "/nonexistent/b.json"]);
    assert_eq!(o.status.code(), Some(3));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(e["error"].is_string() && e["message"].is_string());
}

#[test]
fn grammar_dump_lists_rules() {
    let o = nsps(&["grammar-dump"]);
    assert!(o.status.success());
    let g: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(g["start"], json!("e"));
    assert_eq!(g["rules"].as_array().unwrap().len(), 229);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_data_config(dir.path());
    let data = dir.path().join("data");
    assert!(nsps(&["gen-data", "--config", s(&cfg), "--out", s(&data)]).status.success());
    let train_cfg = dir.path().join("train.json");
    let enc = json!({ "max_len": 12, "hidden": 4, "embed": 4, "variant": "Cc", "n_pairs": 3, "depth": 1 });
    let file = json!({
        "dsl": { "max_len": 12 },
        "r3nn": { "dim": 8, "encoder": enc },
        "train": { "epochs": 2, "batch_size": 4, "max_size": 9 }
    });
    fs::write(&train_cfg, file.to_string()).unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let train_set = data.join("train.jsonl");
    let o = nsps(&["train", "--config", s(&train_cfg), "--data", s(&train_set), "--checkpoint", s(&ckpt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("model.ckpt.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let o = nsps(&["eval", "--checkpoint", s(&ckpt), "--data", s(&train_set), "--ks", "0,5", "--max-size", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["solved"].as_u64() <= rows[1]["solved"].as_u64());
}
