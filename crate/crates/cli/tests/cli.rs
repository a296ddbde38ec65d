use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fairforge"));
    c.env_remove("FAIRFORGE_OUT").env_remove("RUST_LOG");
    c
}

fn write_dataset(dir: &Path) {
    let mut csv = String::from("score,age,color,sex,y\n");
    let mut state: u64 = 99;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    for i in 0..240 {
        let sex = if i % 3 == 0 { "F" } else { "M" };
        let shift = if sex == "F" { -0.4 } else { 0.0 };
        let score = next() * 2.0 - 1.0 + shift;
        let age = 20.0 + 40.0 * next();
        let color = ["red", "green", "blue"][i % 3];
        let y = if score + 0.5 * (next() - 0.5) > -0.1 { "yes" } else { "no" };
        csv.push_str(&format!("{score:.4},{age:.1},{color},{sex},{y}\n"));
    }
    std::fs::write(dir.join("toy.csv"), csv).unwrap();
    std::fs::write(
        dir.join("toy.schema.json"),
        json!({
            "name": "toy",
            "label_column": "y",
            "positive_label_value": "yes",
            "protected_column": "sex",
            "privileged_value": "M",
            "fair_feature_columns": ["score"],
            "numeric_columns": ["score", "age"],
            "categorical_columns": ["color"]
        })
        .to_string(),
    )
    .unwrap();
}

fn dataset() -> Value {
    json!({"csv": "toy.csv", "schema": "toy.schema.json"})
}

fn write_plan(dir: &Path, name: &str, plan: Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&plan).unwrap()).unwrap();
    p
}

fn sweep_plan() -> Value {
    json!({
        "dataset": dataset(),
        "lambda_grid": [0.5, 1.0],
        "base_weights": [0, 0, 0, 0, 0, 0, 1, 0],
        "seeds": [0, 1],
        "train": {"epochs": 25, "learning_rate": 0.01},
    })
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn ingest_reports_shape() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let out_dir = dir.path().join("ingested");
    let out = bin()
        .current_dir(dir.path())
        .args(["ingest", "toy.csv", "--schema", "toy.schema.json", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    ok(&out);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n"], 240);
    // score, age, three one-hot colours
    assert_eq!(summary["d"], 5);
    assert!(out_dir.join("dataset.json").exists());
    assert!(out_dir.join("summary.json").exists());
}

#[test]
fn sweep_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let plan = write_plan(dir.path(), "sweep.json", sweep_plan());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&bin().arg("sweep").arg(&plan).arg("--out").arg(&a).args(["--jobs", "1"]).output().unwrap());
    ok(&bin().arg("sweep").arg(&plan).arg("--out").arg(&b).args(["--jobs", "3"]).output().unwrap());
    let (mut ta, mut tb) = (tree(&a), tree(&b));
    let ma: Value = serde_json::from_slice(&ta.remove("manifest.json").unwrap()).unwrap();
    let mb: Value = serde_json::from_slice(&tb.remove("manifest.json").unwrap()).unwrap();
    assert_eq!(ta, tb);
    // Only the recorded command line differs.
    let strip = |mut m: Value| {
        m.as_object_mut().unwrap().remove("command");
        m
    };
    assert_eq!(strip(ma.clone()), strip(mb));
    let argv = ma["command"].as_array().unwrap();
    assert!(argv.iter().any(|a| a == "sweep"));

    // three λ values × two seeds, plus a seed mean per λ
    let frontier: Vec<Value> = serde_json::from_slice(&ta["frontier.json"]).unwrap();
    assert_eq!(frontier.len(), 9);
    assert_eq!(frontier.iter().filter(|p| p["kind"] == "seed_mean").count(), 3);
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let plan = write_plan(
        dir.path(),
        "train.json",
        json!({
            "dataset": dataset(), "lambda": 1.0,
            "weights": [0, 0, 0, 0, 1, 0, 0, 0], "train": {"epochs": 10},
        }),
    );
    let out = dir.path().join("env-out");
    ok(&bin().arg("train").arg(&plan).env("FAIRFORGE_OUT", &out).output().unwrap());
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["operation"], "train");
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);
    for (rel, sha) in manifest["files"].as_object().unwrap() {
        assert!(out.join(rel).exists(), "{rel}");
        assert_eq!(sha.as_str().unwrap().len(), 64);
    }
}

#[test]
fn export_and_select_read_a_result_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let plan = write_plan(dir.path(), "sweep.json", sweep_plan());
    let res = dir.path().join("res");
    ok(&bin().arg("sweep").arg(&plan).arg("--out").arg(&res).output().unwrap());

    let out = bin().arg("export").arg(&res).args(["--format", "csv"]).output().unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert!(lines[0].starts_with("config_hash,dataset,kind,lambda"));
    assert!(lines[0].contains("test:group.intersectional.outcome"));

    let json_out = dir.path().join("f.json");
    ok(&bin().arg("export").arg(&res).args(["--format", "json", "-o"]).arg(&json_out).output().unwrap());
    assert_eq!(std::fs::read(&json_out).unwrap(), std::fs::read(res.join("frontier.json")).unwrap());

    let profile = write_plan(
        dir.path(),
        "profile.json",
        json!({"name": "p", "target_metric": "group.intersectional.eoo", "accuracy_tolerance_pp": 100}),
    );
    let out = bin().arg("select").arg(&res).arg("--profile").arg(&profile).output().unwrap();
    ok(&out);
    let selected: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(selected["kind"], "seed_mean");
}

#[test]
fn search_writes_selection() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let plan = write_plan(
        dir.path(),
        "search.json",
        json!({
            "dataset": dataset(),
            "profile": {"name": "p", "target_metric": "individual.infra_marginal.eoo", "lambda_candidates": [0, 1]},
            "train": {"epochs": 10},
        }),
    );
    let res = dir.path().join("res");
    let out = bin().arg("search").arg(&plan).arg("--out").arg(&res).output().unwrap();
    ok(&out);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    let sel: Value = serde_json::from_slice(&std::fs::read(res.join("selection.json")).unwrap()).unwrap();
    assert_eq!(summary["selection"]["config_hash"], sel["config_hash"]);
}

#[test]
fn invalid_plan_exits_1_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let mut plan = sweep_plan();
    plan["base_weights"] = json!([0, 0, 0, 0, 0, 0, 1]);
    let plan = write_plan(dir.path(), "bad.json", plan);
    let out = bin().arg("sweep").arg(&plan).arg("--out").arg(dir.path().join("x")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("base_weights"));
    assert!(!dir.path().join("x").exists());

    let out = bin()
        .arg("sweep")
        .arg(&plan)
        .args(["--error-format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "invalid_input");
    assert_eq!(err["field"], "base_weights");

    let mut bad_lr = sweep_plan();
    bad_lr["train"]["learning_rate"] = json!(0);
    let plan = write_plan(dir.path(), "bad_lr.json", bad_lr);
    let out = bin().arg("sweep").arg(&plan).args(["--error-format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["field"], "train.learning_rate");
}

#[test]
fn missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let mut plan = sweep_plan();
    plan["dataset"]["csv"] = json!("gone.csv");
    let plan = write_plan(dir.path(), "plan.json", plan);
    let out = bin().arg("sweep").arg(&plan).arg("--out").arg(dir.path().join("x")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.contains("gone.csv"));
}

#[test]
fn shipped_configs_parse() {
    use fairforge::harness::{ConsensusPlan, SearchPlan, StakeholderProfile, SweepPlan, TrainPlan};
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let read = |p: PathBuf| -> String { std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display())) };
    let plans = root.join("plans");
    serde_json::from_str::<SweepPlan>(&read(plans.join("adult_lambda_sweep.json"))).unwrap().validate().unwrap();
    let alpha: SweepPlan = serde_json::from_str(&read(plans.join("compas_alpha_sweep.json"))).unwrap();
    assert!(alpha.is_alpha());
    alpha.validate().unwrap();
    serde_json::from_str::<ConsensusPlan>(&read(plans.join("compas_consensus.json"))).unwrap().validate().unwrap();
    serde_json::from_str::<TrainPlan>(&read(plans.join("german_train.json"))).unwrap().validate().unwrap();
    serde_json::from_str::<SearchPlan>(&read(plans.join("compas_civil_rights_search.json"))).unwrap().validate().unwrap();
    let mut profiles = 0;
    for e in std::fs::read_dir(root.join("profiles")).unwrap() {
        let p: StakeholderProfile = serde_json::from_str(&read(e.unwrap().path())).unwrap();
        p.validate().unwrap();
        assert!(fairforge::stakeholders::find_preset(&p.name).is_some(), "{}", p.name);
        profiles += 1;
    }
    assert_eq!(profiles, 6);
    for e in std::fs::read_dir(root.join("schemas")).unwrap() {
        let s: fairforge::DatasetSchema = serde_json::from_str(&read(e.unwrap().path())).unwrap();
        s.validate().unwrap();
    }
    let registry = fairforge_service::Registry::load(&root.join("registry.json"));
    assert_eq!(registry.names(), vec!["adult", "compas", "german", "adult-2k"]);
    assert!(registry.diagnostics.is_empty());
    for e in std::fs::read_dir(root.join("api")).unwrap() {
        let v: Value = serde_json::from_str(&read(e.unwrap().path())).unwrap();
        assert!(v["title"].is_string());
    }
}
