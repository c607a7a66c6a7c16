use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn cmust(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cmust"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CMUST_OUTPUT_ROOT")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gen_writes_reproducible_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen", "--seed", "0", "--tasks", "3", "--nodes", "4", "--steps", "200", "--interval", "15", "--out", "a"];
    let (code, _, err) = cmust(&args, dir.path());
    assert_eq!(code, 0, "{err}");
    let mut again = args;
    again[args.len() - 1] = "b";
    assert_eq!(cmust(&again, dir.path()).0, 0);
    for k in 0..3 {
        let a = dir.path().join(format!("a/task{k}"));
        let b = dir.path().join(format!("b/task{k}"));
        let manifest = read_json(&a.join("manifest.json"));
        assert_eq!(manifest["interval_minutes"], 15);
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        }
    }
    let (code, _, _) = cmust(&["gen", "--tasks", "0", "--out", "c"], dir.path());
    assert_ne!(code, 0);
}

fn write_config(dir: &Path, mode: &str, extra: &str, out: &str) -> String {
    let text = format!(
        r#"{{
  "mode": "{mode}",{extra}
  "seed": 3,
  "data": {{"paths": ["data/task0", "data/task1"]}},
  "train": {{"max_epochs": 2, "patience": 2, "train_stride": 4}},
  "roada": {{"max_epochs_warmup": 2, "max_epochs_refine": 2, "autoencoder": {{"latent": 16, "epochs": 20, "lr": 0.5}}}},
  "output": {{"dir": "{out}"}}
}}"#
    );
    let path = format!("{out}.json");
    fs::write(dir.join(&path), text).unwrap();
    path
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        cmust(&["gen", "--tasks", "2", "--nodes", "3", "--steps", "240", "--interval", "60", "--out", "data"], d).0,
        0
    );

    let cfg = write_config(d, "roada", "", "run_a");
    let (code, stdout, err) = cmust(&["train", &cfg], d);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("mean"));
    let run = d.join("run_a");
    for f in ["resolved_config.json", "metrics.json", "epochlog.csv", "freeze_report.json", "roada_run.json", "timing.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let metrics = read_json(&run.join("metrics.json"));
    assert_eq!(metrics.as_array().unwrap().len(), 2);
    assert_eq!(metrics[0]["wall_seconds"], 0.0);
    assert_eq!(fs::read_dir(run.join("checkpoints")).unwrap().count(), 2);
    let resolved = read_json(&run.join("resolved_config.json"));
    assert_eq!(resolved["model"]["slots_per_day"], 24);
    assert_eq!(resolved["roada"]["variance_threshold"], 1e-6);
    let report = read_json(&run.join("freeze_report.json"));
    assert_eq!(report[0]["parameters"][0]["variance_histogram"].as_array().unwrap().len(), 16);

    // same config again: identical metrics and checkpoints
    let cfg_b = write_config(d, "roada", "", "run_b");
    assert_eq!(cmust(&["train", &cfg_b], d).0, 0);
    assert_eq!(
        fs::read(run.join("metrics.json")).unwrap(),
        fs::read(d.join("run_b/metrics.json")).unwrap()
    );

    // eval reproduces the recorded test MAE
    let ckpt = run.join("checkpoints/task1");
    let (code, stdout, err) = cmust(
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "data/task1", "--out", "eval.json"],
        d,
    );
    assert_eq!(code, 0, "{err}");
    let eval: Value = serde_json::from_str(&stdout).unwrap();
    let recorded = metrics[1]["mae"].as_f64().unwrap();
    assert!((eval["mae"].as_f64().unwrap() - recorded).abs() <= 1e-9);
    assert!(d.join("eval.json").exists());

    // eval against the wrong dataset shape is a configuration error
    assert_eq!(
        cmust(&["gen", "--tasks", "1", "--nodes", "5", "--steps", "240", "--interval", "60", "--out", "other"], d).0,
        0
    );
    let (code, _, _) = cmust(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "other/task0"], d);
    assert_eq!(code, 2);

    let (code, _, err) = cmust(
        &["export-attention", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "data/task1", "--window", "2", "--out", "att.json"],
        d,
    );
    assert_eq!(code, 0, "{err}");
    let att = read_json(&d.join("att.json"));
    let maps = att["maps"].as_array().unwrap();
    assert_eq!(maps.len(), 6 * 2);
    for m in maps {
        for ctx in m["scores"].as_array().unwrap() {
            for row in ctx.as_array().unwrap() {
                let s: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
                assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn single_mode_writes_no_freeze_report_and_bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cmust(&["gen", "--tasks", "2", "--nodes", "3", "--steps", "240", "--interval", "60", "--out", "data"], d);
    let cfg = write_config(d, "single", "", "single");
    let (code, _, err) = cmust(&["train", &cfg], d);
    assert_eq!(code, 0, "{err}");
    assert!(!d.join("single/freeze_report.json").exists());
    assert_eq!(fs::read_dir(d.join("single/checkpoints")).unwrap().count(), 2);

    let bad = write_config(d, "roada", "\n  \"colour\": 1,", "bad");
    assert_eq!(cmust(&["train", &bad], d).0, 2);
    let missing_ablation = write_config(d, "ablation", "", "abl");
    assert_eq!(cmust(&["train", &missing_ablation], d).0, 2);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cmust(&["gen", "--tasks", "1", "--nodes", "3", "--steps", "240", "--interval", "60", "--out", "data"], d);
    let text = r#"{
  "mode": "single",
  "data": {"paths": ["data/task0"]},
  "train": {"max_epochs": 2, "patience": 2, "lr": 1e300},
  "output": {"dir": "div"}
}"#;
    fs::write(d.join("div.json"), text).unwrap();
    let (code, _, err) = cmust(&["train", "div.json"], d);
    assert_eq!(code, 3, "{err}");
}
