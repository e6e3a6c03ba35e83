//! End-to-end runs of the `cfdriver` binary on tiny configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = "\
[pipeline]
templates = clear_road, red_light
train_episodes = 2
reserve_episodes = 2
eval_routes = 2
seed = 3
workers = 1

[trees]
rounds = 20

[cf]
max_search_iters = 60
population = 12

[train]
epochs = 2
hidden = 8
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfdriver"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p
}

fn manifest(out: &Path) -> Value {
    let mut p = out.as_os_str().to_owned();
    p.push(".manifest.json");
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_config_is_a_user_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demos.jsonl");
    let o = run(&["collect", "--config", s(&dir.path().join("absent.conf")), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.conf"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_arguments_are_user_errors() {
    assert_eq!(code(&run(&["collect"])), 1);
    assert_eq!(code(&run(&["no-such-stage"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["evaluate", "--policy", "learner", "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    let demos = d.join("demos.jsonl");
    let model = d.join("trees.json");
    let aug = d.join("aug.jsonl");
    let learner = d.join("learner.json");
    let report = d.join("expert.json");

    let o = run(&["collect", "--config", s(&cfg), "--out", s(&demos)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&demos);
    assert_eq!(m["stage"], "collect");
    assert_eq!(m["seed"], 3);
    assert!(m["n_original"].as_u64().unwrap() > 0);
    assert!(d.join("demos.jsonl.schema.json").exists());

    let o = run(&["distill", "--config", s(&cfg), "--dataset", s(&demos), "--out", s(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&model);
    assert_eq!(m["config"]["trees"]["rounds"], 20);
    assert_eq!(m["config"]["trees"]["max_depth"], 4);
    assert!(m["tree_agreement"].as_f64().unwrap() > 0.5);

    let o = run(&["augment", "--config", s(&cfg), "--dataset", s(&demos), "--model", s(&model), "--out", s(&aug), "--fraction", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&aug).unwrap(), fs::read(&demos).unwrap());
    assert_eq!(manifest(&aug)["cf_fraction"], 0.0);

    let o = run(&["train", "--config", s(&cfg), "--dataset", s(&aug), "--out", s(&learner)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(d.join("learner.loss.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);

    let o = run(&["evaluate", "--config", s(&cfg), "--policy", "learner", "--model", s(&learner), "--out", s(&d.join("l.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["evaluate", "--config", s(&cfg), "--policy", "expert", "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&report)["driving_score"], 100.0);
    let csv = fs::read_to_string(d.join("expert.csv")).unwrap();
    assert!(csv.starts_with("policy,driving_score,"));
}

#[test]
fn corrupted_dataset_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    let demos = d.join("demos.jsonl");
    assert_eq!(code(&run(&["collect", "--config", s(&cfg), "--out", s(&demos)])), 0);
    let text = fs::read_to_string(&demos).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"sensor_obs\": ";
    fs::write(&demos, lines.join("\n")).unwrap();
    let out = d.join("trees.json");
    let o = run(&["distill", "--config", s(&cfg), "--dataset", s(&demos), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("demos.jsonl:5:"), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn infeasible_augmentation_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Clear-road demonstrations are all GO, so the tree never predicts
    // another class and no counterfactual exists.
    let cfg = write_config(d, &TINY.replace("clear_road, red_light", "clear_road").replace("train_episodes = 2", "train_episodes = 1"));
    let demos = d.join("demos.jsonl");
    let model = d.join("trees.json");
    let aug = d.join("aug.jsonl");
    assert_eq!(code(&run(&["collect", "--config", s(&cfg), "--out", s(&demos)])), 0);
    assert_eq!(code(&run(&["distill", "--config", s(&cfg), "--dataset", s(&demos), "--out", s(&model)])), 0);
    let o = run(&["augment", "--config", s(&cfg), "--dataset", s(&demos), "--model", s(&model), "--out", s(&aug)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&aug);
    assert_eq!(m["cf_fraction"], 0.0);
    assert_eq!(m["n_cf"], 0);
    assert_eq!(m["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn report_summarizes_ablation_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, TINY);
    let out_dir = d.join("abl");
    let o = run(&["ablate", "--config", s(&cfg), "--seeds", "3,4", "--out-dir", s(&out_dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "seed,A_original,B_original_matched,C_cf_augmented,expert,cf_gap");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("mean,"));
    let per_seed = fs::read_to_string(out_dir.join("ablation_seed3.csv")).unwrap();
    assert_eq!(per_seed.lines().count(), 5);

    let o = run(&["report", s(&out_dir.join("ablation_seed3.json")), s(&out_dir.join("ablation_seed4.json"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
}
