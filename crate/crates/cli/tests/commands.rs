//! Subcommands end to end through the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pixmimic_core::arena::ActionClass;
use pixmimic_core::datapipe::{DatasetManifest, Episode, HistogramReport, MANIFEST_FILE};

fn pixmimic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixmimic"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn arg(key: &str, value: impl AsRef<Path>) -> String {
    format!("--{key}={}", value.as_ref().display())
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn record_small(dir: &Path, seed: u64) -> Output {
    pixmimic(&[
        "record",
        "--seed",
        &seed.to_string(),
        &arg("dataset", dir),
        "--episodes=2",
        "--tick_limit=300",
        "--val_fraction=0.5",
    ])
}

#[test]
fn record_writes_a_reproducible_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = record_small(d, 4);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let m = DatasetManifest::load(&a.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.episodes.len(), 2);
    m.validate(&a).unwrap();
    for e in &m.episodes {
        assert!(a.join(&e.file.path).is_file());
    }
    let h: HistogramReport = serde_json::from_slice(&fs::read(a.join("histogram.json")).unwrap()).unwrap();
    assert_eq!(h.train.total + h.val.total, 600);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn bad_configuration_exits_1_before_side_effects() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("never");
    let out = pixmimic(&["record", &arg("dataset", &dir), "--episodez=2"]);
    assert_eq!(code(&out), 1);
    assert!(!dir.exists());

    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"episodes": 2, "arena": {"gravity": 0.5, "gravityy": 1}}"#).unwrap();
    let out = pixmimic(&["record", "--config", cfg.to_str().unwrap(), &arg("dataset", &dir)]);
    assert_eq!(code(&out), 1);
    assert!(!dir.exists());
}

#[test]
fn missing_checkpoint_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["eval", "play", "saliency"] {
        let out = pixmimic(&[cmd, "--checkpoint", tmp.path().join("nope.ckpt").to_str().unwrap()]);
        assert_eq!(code(&out), 1, "{cmd}");
    }
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = record_small(&blocker.join("sub"), 0);
    assert_eq!(code(&out), 2);
}

#[test]
fn port_in_use_exits_2() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port();
    let out = pixmimic(&["serve", "--port", &port.to_string()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

/// Short training, evaluation, play and saliency on one tiny dataset.
#[test]
fn train_eval_play_saliency() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&record_small(&data, 1)), 0);
    let common = |out: &Path| {
        vec![
            arg("dataset", &data),
            arg("output", out),
            "--max_iterations=4".to_string(),
            "--batch_size=4".to_string(),
            "--eval_every=2".to_string(),
            "--deterministic=true".to_string(),
        ]
    };
    let (o1, o2) = (tmp.path().join("o1"), tmp.path().join("o2"));
    for o in [&o1, &o2] {
        let mut args = vec!["train".to_string(), "--seed".into(), "3".into()];
        args.extend(common(o));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = pixmimic(&refs);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(files(&o1), files(&o2));
    let log = fs::read_to_string(o1.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"iteration\"")).count(), 4 + 2);
    let ckpt = o1.join("model.ckpt");

    let out = pixmimic(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        &arg("dataset", &data),
        &arg("output", &o1),
        "--compute_bias=true",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(o1.join("eval/report.json")).unwrap()).unwrap();
    let top1 = report["metrics"]["top1"]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&top1));
    assert!(o1.join("eval/confusion.pgm").is_file());

    let play = |o: &Path| {
        pixmimic(&[
            "play",
            "--seed",
            "2",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            &arg("dataset", &data),
            &arg("output", o),
            "--top_k=1",
            "--games=2",
            "--match_tick_limit=150",
        ])
    };
    for o in [&o1, &o2] {
        let out = play(o);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(files(&o1.join("play")), files(&o2.join("play")));

    let out = pixmimic(&[
        "saliency",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        &arg("dataset", &data),
        &arg("output", &o1),
        "--saliency_start=20",
        "--saliency_length=3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ppm = fs::read_dir(o1.join("saliency"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ppm"))
        .count();
    assert_eq!(ppm, 3 * 4);
}

#[test]
fn diverging_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&record_small(&data, 1)), 0);
    let out = pixmimic(&[
        "train",
        &arg("dataset", &data),
        &arg("output", tmp.path().join("o")),
        "--base_lr=1e30",
        "--max_iterations=20",
        "--batch_size=2",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn recorded_labels_survive_loading() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&record_small(tmp.path(), 8)), 0);
    let m = DatasetManifest::load(&tmp.path().join(MANIFEST_FILE)).unwrap();
    let ep = Episode::load(&tmp.path().join(&m.episodes[0].file.path)).unwrap();
    assert_eq!(ep.len(), m.episodes[0].frames);
    assert!(ep.labels.iter().all(|l| ActionClass::ALL.contains(l)));
}
