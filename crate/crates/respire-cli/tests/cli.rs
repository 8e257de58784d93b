//! Command-line behavior: exit codes, artifact checks, and output formats.
//!
//! Exit codes under test: 0 success, 1 usage, 2 data error, 3 artifact
//! mismatch.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use respire::corpus::{write_wav, Signal, WavEncoding};

fn respire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_respire"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap_or(-1)
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn write_corpus(dir: &Path, clips: usize) {
    let mut manifest = String::from("path,label,split\n");
    for i in 0..clips {
        let patient = i % 2 == 0;
        let split = match i % 6 {
            0..=2 => "train",
            3 | 4 => "validation",
            _ => "test",
        };
        let freq = if patient { 350.0 } else { 2300.0 } + 19.0 * i as f64;
        let samples: Vec<f64> = (0..8192)
            .map(|t| 0.4 * (2.0 * PI * freq * t as f64 / 44100.0 + i as f64).sin())
            .collect();
        let name = format!("clip_{i:02}.wav");
        write_wav(
            &dir.join(&name),
            &Signal::new(samples, 44100).unwrap(),
            WavEncoding::Pcm16,
        )
        .unwrap();
        manifest.push_str(&format!(
            "{name},{},{split}\n",
            if patient { "patient" } else { "non_patient" }
        ));
    }
    std::fs::write(dir.join("manifest.csv"), manifest).unwrap();
}

#[test]
fn usage_errors_exit_1() {
    let out = respire(&["train", "--learner", "nonsense", "--features", "x.csv"]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));

    let out = respire(&["no-such-command"]);
    assert_eq!(code(&out), 1);

    let out = respire(&["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn missing_artifacts_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = respire(&[
        "train",
        "--features",
        missing.to_str().unwrap(),
        "--learner",
        "tree",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("nope.csv"),
        "stderr names the missing path: {}",
        stderr(&out)
    );
}

#[test]
fn mel_range_writes_one_table_per_m() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path(), 6);
    let out_dir = tempfile::tempdir().unwrap();
    let out = respire(&[
        "extract",
        "--manifest",
        corpus.path().join("manifest.csv").to_str().unwrap(),
        "--mel",
        "2..4",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for m in 2..=4 {
        assert!(out_dir
            .path()
            .join(format!("features_m{m:03}.csv"))
            .exists());
    }
}

#[test]
fn failed_clips_exit_nonzero_unless_allowed() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path(), 6);
    std::fs::write(corpus.path().join("broken.wav"), b"junk").unwrap();
    let mut manifest = std::fs::read_to_string(corpus.path().join("manifest.csv")).unwrap();
    manifest.push_str("broken.wav,patient,train\n");
    std::fs::write(corpus.path().join("manifest.csv"), &manifest).unwrap();

    let out_dir = tempfile::tempdir().unwrap();
    let args = |allow: bool| {
        let mut v = vec![
            "extract".to_string(),
            "--manifest".into(),
            corpus
                .path()
                .join("manifest.csv")
                .to_str()
                .unwrap()
                .to_string(),
            "--mel".into(),
            "3".into(),
            "--out".into(),
            out_dir.path().to_str().unwrap().to_string(),
        ];
        if allow {
            v.push("--allow-skips".into());
        }
        v
    };

    let out = Command::new(env!("CARGO_BIN_EXE_respire"))
        .args(args(false))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    let sidecar = out_dir.path().join("extract_errors.txt");
    assert!(sidecar.exists());
    assert!(std::fs::read_to_string(&sidecar)
        .unwrap()
        .contains("broken.wav"));

    let out = Command::new(env!("CARGO_BIN_EXE_respire"))
        .args(args(true))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn digest_mismatch_exits_3() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path(), 12);
    let out_dir = tempfile::tempdir().unwrap();
    let out_str = out_dir.path().to_str().unwrap();
    let manifest = corpus.path().join("manifest.csv");

    let out = respire(&[
        "extract",
        "--manifest",
        manifest.to_str().unwrap(),
        "--mel",
        "3..4",
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let features3 = format!("{out_str}/features_m003.csv");
    let features4 = format!("{out_str}/features_m004.csv");
    let out = respire(&[
        "train",
        "--features",
        &features3,
        "--learner",
        "tree",
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // A model trained on M=3 features against the M=4 table.
    let out = respire(&[
        "evaluate",
        "--features",
        &features4,
        "--model",
        &format!("{out_str}/model_tree.json"),
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("digest"));
}

#[test]
fn tree_interpolates_noiseless_fixtures_on_train_split() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path(), 12);
    let out_dir = tempfile::tempdir().unwrap();
    let out_str = out_dir.path().to_str().unwrap();

    let out = respire(&[
        "extract",
        "--manifest",
        corpus.path().join("manifest.csv").to_str().unwrap(),
        "--mel",
        "4",
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let features = format!("{out_str}/features_m004.csv");

    let out = respire(&[
        "train",
        "--features",
        &features,
        "--learner",
        "tree",
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out = respire(&[
        "evaluate",
        "--features",
        &features,
        "--model",
        &format!("{out_str}/model_tree.json"),
        "--split",
        "train",
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        text.contains("accuracy                  1.0000"),
        "train-split accuracy not 1.0:\n{text}"
    );
}

#[test]
fn predict_prints_label_and_score() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path(), 12);
    let out_dir = tempfile::tempdir().unwrap();
    let out_str = out_dir.path().to_str().unwrap();

    for args in [
        vec![
            "extract",
            "--manifest",
            corpus.path().join("manifest.csv").to_str().unwrap(),
            "--mel",
            "4",
            "--out",
            out_str,
        ],
        vec![
            "train",
            "--features",
            &format!("{out_str}/features_m004.csv"),
            "--learner",
            "svm",
            "--out",
            out_str,
        ],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_respire"))
            .args(&args)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    }

    let out = respire(&[
        "predict",
        "--model",
        &format!("{out_str}/model_svm.json"),
        corpus.path().join("clip_00.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let line = String::from_utf8_lossy(&out.stdout);
    let mut parts = line.split_whitespace();
    let label = parts.next().unwrap();
    assert!(label == "patient" || label == "non_patient", "line: {line}");
    let score: f64 = parts.next().unwrap().parse().expect("numeric score");
    assert!(score.is_finite());
}

#[test]
fn seed_environment_variable_is_honored() {
    let corpus = tempfile::tempdir().unwrap();
    write_corpus(corpus.path(), 12);
    let out_dir = tempfile::tempdir().unwrap();
    let out_str = out_dir.path().to_str().unwrap();

    let out = respire(&[
        "extract",
        "--manifest",
        corpus.path().join("manifest.csv").to_str().unwrap(),
        "--mel",
        "3",
        "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0);
    let features = format!("{out_str}/features_m003.csv");

    let train = |seed_env: Option<&str>, model: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_respire"));
        cmd.args([
            "train",
            "--features",
            &features,
            "--learner",
            "bagging",
            "--model-out",
            model,
            "--out",
            out_str,
        ]);
        if let Some(seed) = seed_env {
            cmd.env("RESPIRE_SEED", seed);
        }
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    };

    let m_default = format!("{out_str}/m_default.json");
    let m_env7 = format!("{out_str}/m_env7.json");
    let m_env7_again = format!("{out_str}/m_env7b.json");
    train(None, &m_default);
    train(Some("7"), &m_env7);
    train(Some("7"), &m_env7_again);

    let read = |p: &str| std::fs::read(p).unwrap();
    assert_eq!(read(&m_env7), read(&m_env7_again));
    assert_ne!(read(&m_default), read(&m_env7));
}
