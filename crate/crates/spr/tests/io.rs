use std::fs;
use std::path::Path;

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spr::checkpoint::{read_checkpoint, write_checkpoint};
use spr::config::{Baseline, Mode, RunConfig};
use spr::cubefile::{read_cubes, write_cubes, CubeSet};
use spr::dataset::{describe, load_dataset, load_video, read_labels, LABELS_FILE};
use spr::report::{read_metrics, read_scores, write_metrics, write_scores, Metrics, ScoreRow};
use spr::Error;
use spr_core::cube::{Paradigm, Provenance, Volume};
use spr_core::localize::BoundingBox;
use spr_core::nn::{AdamConfig, AdamState, Architecture, Autoencoder, Tensor4};

fn write_frame(path: &Path, w: u32, h: u32, value: u8) {
    GrayImage::from_pixel(w, h, image::Luma([value])).save(path).unwrap();
}

fn write_video(root: &Path, id: &str, n: usize, value: u8) {
    let dir = root.join(id);
    fs::create_dir_all(&dir).unwrap();
    for i in 0..n {
        write_frame(&dir.join(format!("{:03}.png", i)), 16, 8, value);
    }
}

#[test]
fn config_file_round_trip() {
    let text = "# run\nbaseline = LBR\nmode=merge\nparadigm = PRD\nr = 0.01\nseed = 7\nbase_channels=8\n";
    let c = RunConfig::parse_str(text).unwrap();
    assert_eq!(c.baseline, Baseline::Lbr);
    assert_eq!(c.mode, Mode::Merge);
    assert_eq!(c.paradigm, Paradigm::Prd);
    assert_eq!(c.shrink_rate, 0.01);
    assert_eq!(c.seed, 7);
    assert_eq!(c.base_channels, 8);
    assert_eq!(c.batch_size, RunConfig::default().batch_size);
}

#[test]
fn config_errors_carry_line_and_key_list() {
    let err = RunConfig::parse_str("seed = 1\nbogus = 3\n").unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Config { line: 2, .. }), "{msg}");
    assert!(msg.contains("shrink_rate"), "{msg}");
    assert!(RunConfig::parse_str("epochs = many").is_err());
}

#[test]
fn identical_frames_load_as_one_clip() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "v", 10, 255);
    let clip = load_video(&dir.path().join("v")).unwrap();
    assert_eq!(clip.len(), 10);
    assert_eq!((clip.width(), clip.height()), (16, 8));
    assert!(clip.frames().iter().all(|f| f.data().iter().all(|&x| x == 1.0)));
}

#[test]
fn mixed_resolution_names_the_offending_file() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "v", 3, 10);
    write_frame(&dir.path().join("v/003.png"), 8, 8, 10);
    let msg = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("003.png"), "{msg}");
}

#[test]
fn describe_reports_rate_and_missing_labels() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "a", 4, 0);
    write_video(dir.path(), "b", 6, 0);
    let labels = "video_id,frame_index,label\na,0,0\na,1,1\na,2,1\na,3,0\nb,0,0\nb,1,0\nb,2,0\nb,3,0\nb,4,0\nb,5,1\n";
    fs::write(dir.path().join(LABELS_FILE), labels).unwrap();
    let s = describe(dir.path()).unwrap();
    assert_eq!((s.videos, s.frames, s.width, s.height), (2, 10, 16, 8));
    assert_eq!(s.anomalous, Some(3));
    assert!((s.anomaly_rate().unwrap() - 0.3).abs() < 1e-12);
    assert!(s.warnings.is_empty());

    fs::remove_file(dir.path().join(LABELS_FILE)).unwrap();
    let s = describe(dir.path()).unwrap();
    assert_eq!(s.anomalous, None);
    assert_eq!(s.warnings.len(), 1);
    assert_eq!(s.frames, 10);
}

#[test]
fn invalid_label_is_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    write_video(dir.path(), "a", 2, 0);
    let path = dir.path().join(LABELS_FILE);
    fs::write(&path, "video_id,frame_index,label\na,0,0\na,1,2\n").unwrap();
    let msg = read_labels(&path).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
    assert!(describe(dir.path()).is_err());
}

#[test]
fn cube_cache_round_trip() {
    let mut set = CubeSet::default();
    for i in 0..3 {
        let data: Vec<f32> = (0..2 * 4 * 4).map(|k| (k * (i + 1)) as f32 / 7.0).collect();
        let bbox = BoundingBox {
            x0: i,
            y0: 1,
            x1: i + 5,
            y1: 9,
            frame_index: 10 + i,
        };
        set.push(
            Provenance {
                video_id: format!("v{i}"),
                center_frame: 10 + i,
                bbox,
            },
            Volume::new(2, 1, 4, 4, data).unwrap(),
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.cubes");
    write_cubes(&path, &set).unwrap();
    let back = read_cubes(&path).unwrap();
    assert_eq!(back.provenance, set.provenance);
    assert_eq!(back.volumes, set.volumes);

    let mut bytes = fs::read(&path).unwrap();
    bytes.push(0);
    fs::write(&path, &bytes).unwrap();
    assert!(read_cubes(&path).is_err());
    fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert!(read_cubes(&path).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_outputs_and_optimizer() {
    let arch = Architecture {
        in_channels: 3,
        out_channels: 2,
        height: 16,
        width: 8,
        base_width: 4,
    };
    let mut model = Autoencoder::<f32>::new(&arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut opt = AdamState::new(AdamConfig::default(), &model);
    let x = Tensor4::from_vec([2, 3, 16, 8], (0..768).map(|i| (i % 17) as f32 / 17.0).collect()).unwrap();
    let y = Tensor4::from_vec([2, 2, 16, 8], vec![0.25; 512]).unwrap();
    spr_core::nn::weighted_backward_step(&mut model, &mut opt, &x, &y, &[1.0, 0.5]).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    write_checkpoint(&path, &model, &opt).unwrap();
    let (model2, opt2) = read_checkpoint(&path).unwrap();
    assert_eq!(model2, model);
    assert_eq!(opt2, opt);
    assert_eq!(model2.forward(&x).unwrap(), model.forward(&x).unwrap());

    fs::write(&path, b"SPRCKPT0").unwrap();
    assert!(read_checkpoint(&path).is_err());
}

#[test]
fn scores_and_metrics_round_trip() {
    let rows = vec![
        ScoreRow {
            video_id: "a".into(),
            frame_index: 0,
            s_app: Some(0.5),
            s_mot: None,
            s_fused: 0.25,
        },
        ScoreRow {
            video_id: "a".into(),
            frame_index: 1,
            s_app: None,
            s_mot: None,
            s_fused: -1.0,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_scores(&path, &rows, false).unwrap();
    assert_eq!(read_scores(&path).unwrap(), rows);
    let header = fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("video_id,frame_index,s_app,s_fused"), "{header}");

    let m = Metrics {
        auroc: 0.875,
        eer: 0.125,
        n_frames: 40,
        n_anomalous: 4,
    };
    let mp = dir.path().join("metrics.txt");
    write_metrics(&mp, &m).unwrap();
    assert_eq!(read_metrics(&mp).unwrap(), m);
}
