use std::path::Path;
use std::process::{Command, Output};

fn beamsema(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsema"))
        .args(args)
        .env_remove("BEAMSEMA_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, seed: u64) {
    let out = dir.join("data");
    let o = beamsema(&["gen", "--preset", "scenario7", "--out", out.to_str().unwrap(), "--seed", &seed.to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

const QUICK: &str = r#"dataset = "data"
seed = 3
predictors = ["position_mlp", "bbox_mlp"]

[train.position_mlp]
batch_size = 64
base_lr = 0.01
decay_epochs = []
decay_factor = 0.1
total_epochs = 2
seed = 0

[train.bbox_mlp]
batch_size = 64
base_lr = 0.01
decay_epochs = [1]
decay_factor = 0.1
total_epochs = 2
seed = 0
"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, QUICK).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn unknown_preset_exits_2_and_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = beamsema(&["gen", "--preset", "scenario9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("scenario5") && err.contains("scenario7"), "{err}");
}

#[test]
fn gen_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen(a.path(), 4);
    gen(b.path(), 4);
    let read = |d: &Path| std::fs::read(d.join("data/manifest.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn run_without_dataset_exits_3_naming_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let o = beamsema(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("manifest.csv"), "{}", stderr(&o));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "dataset = \"d\"\npredictors = [\"resnet\"]\n").unwrap();
    let out = dir.path().join("out");
    let o = beamsema(&["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_threads_is_rejected() {
    let o = beamsema(&["--threads", "0", "report", "--in", "nothing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_report_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 2);
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let o = beamsema(&["--threads", "1", "run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("predictor"));

    let report = out.join("report.json");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["seed"], 3);
    assert_eq!(json["predictors"].as_object().unwrap().len(), 2);
    assert!(out.join("tradeoff.csv").exists() && out.join("details.json").exists());

    let table = beamsema(&["report", "--in", report.to_str().unwrap()]);
    assert!(table.status.success());
    let first = stdout(&table).lines().next().unwrap().to_owned();
    assert_eq!(first.split_whitespace().collect::<Vec<_>>(), ["predictor", "params", "top1", "top2", "top3"]);

    let csv = || stdout(&beamsema(&["report", "--in", report.to_str().unwrap(), "--format", "csv"]));
    let c1 = csv();
    assert!(c1.starts_with("predictor,params,top1,top2,top3\n"));
    assert_eq!(c1.lines().count(), 3);
    assert_eq!(c1, csv());

    let out2 = dir.path().join("out2");
    let o = beamsema(&["--threads", "1", "run", "--config", &cfg, "--out", out2.to_str().unwrap(), "--seed", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json2: serde_json::Value = serde_json::from_slice(&std::fs::read(out2.join("report.json")).unwrap()).unwrap();
    assert_eq!(json2["seed"], 8);
}

#[test]
fn malformed_report_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, "{\"seed\": 1, \"predictors\": ").unwrap();
    let o = beamsema(&["report", "--in", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 5);
    let cfg = write_config(dir.path());
    let out = dir.path().join("ckpt");
    let o = beamsema(&["train", "--config", &cfg, "--predictor", "position_mlp", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = out.join("position_mlp.checkpoint.json");
    assert!(out.join("position_mlp.history.json").exists());

    let o = beamsema(&[
        "eval", "--config", &cfg, "--predictor", "position_mlp", "--checkpoint", ckpt.to_str().unwrap(), "--split", "val",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["split"], "val");
    assert_eq!(m["params"], 4352);
    let (t1, t3) = (m["top1"].as_f64().unwrap(), m["top3"].as_f64().unwrap());
    assert!(t1 <= t3);

    let o = beamsema(&["eval", "--config", &cfg, "--predictor", "bbox_mlp", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
