use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use spr::config::{Baseline, Mode, RunConfig};
use spr::dataset::read_labels;
use spr::pipeline::{self, METRICS_FILE, SCORES_FILE};
use spr::report::{read_metrics, read_scores};
use spr::synth_io::write_corpus;
use spr_core::metrics::auroc;
use spr_core::synth::CorpusSpec;

fn corpus(root: &Path, seed: u64) {
    let spec = CorpusSpec {
        n_videos: 3,
        frames_per_video: 40,
        seed,
        ..CorpusSpec::default()
    };
    write_corpus(&spec, root).unwrap();
}

fn small_config(data: &Path, out: PathBuf) -> RunConfig {
    RunConfig {
        dataset: Some(data.to_path_buf()),
        out,
        base_channels: 4,
        batch_size: 32,
        epochs: 3,
        warmup_epochs: 1,
        ..RunConfig::default()
    }
}

#[test]
fn metrics_agree_with_scores_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    corpus(&data, 1);
    let config = small_config(&data, dir.path().join("out"));
    let summary = pipeline::run(&config).unwrap();

    let rows = read_scores(&config.out.join(SCORES_FILE)).unwrap();
    assert_eq!(rows.len(), 120);
    assert_eq!(rows, summary.rows);
    let labels = read_labels(&data.join("labels.csv")).unwrap();
    let scores: Vec<f64> = rows.iter().map(|r| r.s_fused).collect();
    let truth: Vec<bool> = rows
        .iter()
        .map(|r| labels[&(r.video_id.clone(), r.frame_index)])
        .collect();
    let metrics = read_metrics(&config.out.join(METRICS_FILE)).unwrap();
    assert!((metrics.auroc - auroc(&scores, &truth).unwrap()).abs() < 1e-12);
    assert_eq!(metrics.n_frames, 120);
    assert_eq!(metrics.n_anomalous, truth.iter().filter(|&&t| t).count());
    for name in [
        pipeline::APPEARANCE_CHECKPOINT,
        pipeline::APPEARANCE_TELEMETRY,
        pipeline::EPOCH_RL_FILE,
        pipeline::CURVES_SVG,
    ] {
        assert!(config.out.join(name).exists(), "{name}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    corpus(&data, 2);
    let mut config = small_config(&data, dir.path().join("a"));
    config.motion_enhanced = true;
    pipeline::run(&config).unwrap();
    config.out = dir.path().join("b");
    pipeline::run(&config).unwrap();
    let a = fs::read(dir.path().join("a").join(SCORES_FILE)).unwrap();
    let b = fs::read(dir.path().join("b").join(SCORES_FILE)).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("video_id,frame_index,s_app,s_mot,s_fused"));
}

#[test]
fn merge_mode_scores_only_the_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    let test = dir.path().join("test");
    corpus(&train, 3);
    fs::create_dir_all(&test).unwrap();
    // A one-video test split.
    let spec = CorpusSpec {
        n_videos: 1,
        frames_per_video: 30,
        seed: 4,
        ..CorpusSpec::default()
    };
    write_corpus(&spec, &test).unwrap();
    let mut config = small_config(&test, dir.path().join("out"));
    config.mode = Mode::Merge;
    config.train_dataset = Some(train);
    config.baseline = Baseline::Lbr;
    let summary = pipeline::run(&config).unwrap();
    assert_eq!(summary.rows.len(), 30);
    assert!(summary.n_train_cubes > summary.n_test_cubes);
}

fn spr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_spr")).args(args).output().unwrap()
}

#[test]
fn cli_stages_match_the_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    let out = spr(&["synth", "--out", d, "--videos", "2", "--frames", "30", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("frames=60"));

    let common = ["--set", "base_channels=4", "--set", "epochs=2", "--set", "warmup_epochs=1", "--set", "batch_size=32", "--dataset", d];
    let staged = dir.path().join("staged");
    let staged = staged.to_str().unwrap();
    for stage in ["extract", "train", "score", "eval"] {
        let mut args = vec![stage, "--out", staged];
        args.extend(common);
        let out = spr(&args);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let whole = dir.path().join("whole");
    let mut args = vec!["run", "--out", whole.to_str().unwrap()];
    args.extend(common);
    let out = spr(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("auroc="));
    assert_eq!(
        fs::read(Path::new(staged).join(SCORES_FILE)).unwrap(),
        fs::read(whole.join(SCORES_FILE)).unwrap()
    );

    let out = spr(&["describe", d]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("videos=2"));
}

#[test]
fn cli_errors_use_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = spr(&["run", "--dataset", "x", "--set", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid keys"));

    let missing = dir.path().join("missing");
    let out = spr(&["run", "--dataset", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extract"));
}
