//! Stages of a run: extraction, training, scoring and evaluation, each
//! writing its artifacts under the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spr_core::cube::{
    apply_paradigm, build_frame_cube, build_ofc, build_stc, cube_seed, ParadigmPair, Provenance,
};
use spr_core::flow::clip_flow;
use spr_core::frame::VideoClip;
use spr_core::localize::{localize_foreground, BoundingBox};
use spr_core::metrics::{auroc, eer};
use spr_core::nn::{AdamState, Architecture, Autoencoder};
use spr_core::score::{frame_scores, fuse, score_pairs, smooth_frame_scores, FusionConfig, ScoreRecord};
use spr_core::train::{motion_pairs, train_observed, EpochTelemetry, TrainReport};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::{Baseline, Mode, RunConfig};
use crate::cubefile::{read_cubes, write_cubes, CubeSet};
use crate::dataset::{
    load_dataset, try_anomaly_boxes, try_labels, video_lengths, AnomalyBoxes, Labels,
};
use crate::error::{Error, Result, StageExt};
use crate::report::{
    read_scores, write_batch_telemetry, write_curves_svg, write_epoch_curves, write_epoch_rl,
    write_metrics, write_scores, EpochCurve, Metrics, ScoreRow,
};

pub const APPEARANCE_CHECKPOINT: &str = "appearance.ckpt";
pub const MOTION_CHECKPOINT: &str = "motion.ckpt";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const APPEARANCE_TELEMETRY: &str = "telemetry_appearance.csv";
pub const MOTION_TELEMETRY: &str = "telemetry_motion.csv";
pub const EPOCH_RL_FILE: &str = "epoch_rl.csv";
pub const EPOCH_CURVES_FILE: &str = "epoch_curves.csv";
pub const CURVES_SVG: &str = "curves.svg";

/// A cube counts as anomalous when it covers at least this fraction of an
/// anomaly box on its center frame.
pub const ANOMALY_COVERAGE: f64 = 0.25;

/// Samples per parallel scoring task.
const SCORE_TASK: usize = 256;

/// Appearance cubes and, with motion enabled, their flow cubes.
#[derive(Debug, Clone, Default)]
pub struct Extracted {
    pub appearance: CubeSet,
    pub motion: Option<CubeSet>,
}

impl Extracted {
    fn append(&mut self, other: Extracted) {
        self.appearance.extend(other.appearance);
        match (&mut self.motion, other.motion) {
            (Some(m), Some(o)) => m.extend(o),
            (None, Some(o)) if self.appearance.len() == o.len() => self.motion = Some(o),
            _ => {}
        }
    }
}

/// Cubes of one clip: one per localized object per frame, or one per frame
/// for the frame-based baseline.
pub fn extract_clip(clip: &VideoClip, config: &RunConfig) -> Result<Extracted> {
    let shape = config.cube_shape();
    let loc = config.localize_params();
    let flow = if config.motion_enhanced {
        Some(clip_flow(clip, &config.flow_params())?)
    } else {
        None
    };
    let mut out = Extracted {
        appearance: CubeSet::default(),
        motion: flow.as_ref().map(|_| CubeSet::default()),
    };
    for f in 0..clip.len() {
        let boxes = match config.baseline {
            Baseline::Fbr => vec![BoundingBox::full(clip.width(), clip.height(), f)],
            Baseline::Lbr | Baseline::LbrSpr => localize_foreground(clip, f, &loc)?,
        };
        for b in &boxes {
            let stc = if config.baseline == Baseline::Fbr {
                build_frame_cube(clip, f, &shape)?
            } else {
                build_stc(clip, b, f, &shape)?
            };
            if let (Some(maps), Some(set)) = (&flow, &mut out.motion) {
                let ofc = build_ofc(clip.id(), maps, b, f, &shape)?;
                set.push(ofc.provenance, ofc.volume);
            }
            out.appearance.push(stc.provenance, stc.volume);
        }
    }
    Ok(out)
}

/// Cubes of all clips, in clip order; clips are processed in parallel.
pub fn extract_clips(clips: &[VideoClip], config: &RunConfig) -> Result<Extracted> {
    let parts = clips
        .par_iter()
        .map(|c| extract_clip(c, config))
        .collect::<Result<Vec<_>>>()?;
    let mut all = Extracted {
        appearance: CubeSet::default(),
        motion: config.motion_enhanced.then(CubeSet::default),
    };
    for p in parts {
        all.append(p);
    }
    Ok(all)
}

/// Cubes to train on and cubes to score. In partial mode the training split
/// is absent and training uses the test cubes alone.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub train: Option<Extracted>,
    pub test: Extracted,
}

impl Corpus {
    /// Index of the first test cube in the training order.
    pub fn test_offset(&self) -> usize {
        self.train.as_ref().map_or(0, |t| t.appearance.len())
    }

    fn training(&self) -> Extracted {
        let mut all = self.train.clone().unwrap_or_default();
        if self.train.is_none() {
            all.motion = self.test.motion.as_ref().map(|_| CubeSet::default());
        }
        all.append(self.test.clone());
        all
    }
}

fn cache_path(out: &Path, split: &str, channel: &str) -> PathBuf {
    out.join(format!("{}_{}.cubes", split, channel))
}

fn write_extracted(out: &Path, split: &str, e: &Extracted) -> Result<()> {
    write_cubes(&cache_path(out, split, "appearance"), &e.appearance)?;
    if let Some(m) = &e.motion {
        write_cubes(&cache_path(out, split, "motion"), m)?;
    }
    Ok(())
}

fn read_extracted(out: &Path, split: &str, motion: bool) -> Result<Extracted> {
    Ok(Extracted {
        appearance: read_cubes(&cache_path(out, split, "appearance"))?,
        motion: if motion {
            Some(read_cubes(&cache_path(out, split, "motion"))?)
        } else {
            None
        },
    })
}

fn test_root(config: &RunConfig) -> Result<&Path> {
    config
        .dataset
        .as_deref()
        .ok_or_else(|| Error::Usage("no dataset given".into()))
}

fn create_out(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out).map_err(Error::io(&config.out))
}

/// Loads the dataset(s), extracts cubes and caches them in the output
/// directory.
pub fn extract_stage(config: &RunConfig) -> Result<Corpus> {
    create_out(config)?;
    let clips = load_dataset(test_root(config)?)?;
    let test = extract_clips(&clips, config)?;
    drop(clips);
    write_extracted(&config.out, "test", &test)?;
    let train = match (config.mode, &config.train_dataset) {
        (Mode::Merge, Some(root)) => {
            let clips = load_dataset(root)?;
            let train = extract_clips(&clips, config)?;
            write_extracted(&config.out, "train", &train)?;
            Some(train)
        }
        _ => None,
    };
    info!(
        "extracted {} test cubes, {} training-split cubes",
        test.appearance.len(),
        train.as_ref().map_or(0, |t| t.appearance.len())
    );
    Ok(Corpus { train, test })
}

/// Reads the cube caches written by [`extract_stage`].
pub fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let test = read_extracted(&config.out, "test", config.motion_enhanced)?;
    let train = if config.mode == Mode::Merge {
        Some(read_extracted(&config.out, "train", config.motion_enhanced)?)
    } else {
        None
    };
    Ok(Corpus { train, test })
}

/// Labels, and optionally anomaly extents, of the test split.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub labels: Labels,
    pub boxes: Option<AnomalyBoxes>,
    /// `(video_id, frame count)` of the test split.
    pub videos: Vec<(String, usize)>,
}

pub fn ground_truth(root: &Path) -> Result<Option<GroundTruth>> {
    let Some(labels) = try_labels(root)? else {
        return Ok(None);
    };
    Ok(Some(GroundTruth {
        labels,
        boxes: try_anomaly_boxes(root)?,
        videos: video_lengths(root)?,
    }))
}

/// Whether a cube covers enough of an anomaly on its center frame.
pub fn cube_is_anomalous(p: &Provenance, boxes: &AnomalyBoxes) -> bool {
    boxes
        .get(&(p.video_id.clone(), p.center_frame))
        .map_or(false, |list| {
            list.iter()
                .any(|a| p.bbox.intersection(a) as f64 >= ANOMALY_COVERAGE * a.area() as f64)
        })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Frame-level and cube-level measurements of one epoch's training losses.
fn epoch_curve(
    epoch: &EpochTelemetry,
    offset: usize,
    provenance: &[Provenance],
    truth: &GroundTruth,
) -> EpochCurve {
    let losses = &epoch.sample_losses[offset..offset + provenance.len()];
    let weights = &epoch.sample_weights[offset..offset + provenance.len()];
    let records: Vec<ScoreRecord> = provenance
        .iter()
        .zip(losses)
        .map(|(p, &l)| ScoreRecord {
            s_fused: l,
            ..ScoreRecord::new(p.video_id.clone(), p.center_frame, l, None)
        })
        .collect();
    let covered: std::collections::BTreeSet<(&str, usize)> = provenance
        .iter()
        .map(|p| (p.video_id.as_str(), p.center_frame))
        .collect();
    let frames = frame_scores(&records, &truth.videos);
    let mut normal = Vec::new();
    let mut abnormal = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for f in &frames {
        let Some(&label) = truth.labels.get(&(f.video_id.clone(), f.frame_index)) else {
            continue;
        };
        scores.push(f.score);
        labels.push(label);
        if covered.contains(&(f.video_id.as_str(), f.frame_index)) {
            if label {
                abnormal.push(f.score);
            } else {
                normal.push(f.score);
            }
        }
    }
    let mut curve = EpochCurve {
        epoch: epoch.epoch,
        mean_rl_normal: mean(normal.into_iter()).unwrap_or(f64::NAN),
        mean_rl_abnormal: mean(abnormal.into_iter()).unwrap_or(f64::NAN),
        auroc: auroc(&scores, &labels).ok(),
        ..Default::default()
    };
    if let Some(boxes) = &truth.boxes {
        let is_anom: Vec<bool> = provenance.iter().map(|p| cube_is_anomalous(p, boxes)).collect();
        let pick = |want: bool, xs: &[f64]| -> Vec<f64> {
            xs.iter().zip(&is_anom).filter(|(_, &a)| a == want).map(|(&x, _)| x).collect()
        };
        curve.cube_rl_normal = mean(pick(false, losses).into_iter());
        curve.cube_rl_abnormal = mean(pick(true, losses).into_iter());
        curve.drop_normal = mean(pick(false, weights).into_iter().map(|w| (w == 0.0) as u8 as f64));
        curve.drop_abnormal = mean(pick(true, weights).into_iter().map(|w| (w == 0.0) as u8 as f64));
    }
    curve
}

fn appearance_pairs(volumes: &CubeSet, config: &RunConfig) -> Result<Vec<ParadigmPair>> {
    volumes
        .volumes
        .iter()
        .enumerate()
        .map(|(i, v)| Ok(apply_paradigm(v, config.paradigm, cube_seed(config.seed, i))?))
        .collect()
}

fn new_model(config: &RunConfig, out_channels: usize, stream: u64) -> Result<Autoencoder<f32>> {
    let arch = Architecture {
        in_channels: config.depth,
        out_channels,
        height: config.height,
        width: config.width,
        base_width: config.base_channels,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    Ok(Autoencoder::new(&arch, &mut rng)?)
}

pub struct TrainedModel {
    pub model: Autoencoder<f32>,
    pub optimizer: AdamState<f32>,
    pub report: TrainReport,
}

pub struct Trained {
    pub appearance: TrainedModel,
    pub motion: Option<TrainedModel>,
    /// Appearance-channel curves, when ground truth is available.
    pub curves: Vec<EpochCurve>,
}

fn train_one(
    pairs: &[ParadigmPair],
    config: &RunConfig,
    mut model: Autoencoder<f32>,
    observe: Option<(&[Provenance], usize, &GroundTruth)>,
    curves: &mut Vec<EpochCurve>,
) -> Result<TrainedModel> {
    let mut optimizer = AdamState::new(config.adam_config(), &model);
    let mut tc = config.train_config(config.seed);
    tc.record_samples = observe.is_some();
    let mut on_epoch = |e: &EpochTelemetry| {
        info!(
            "epoch {}: mean loss {:.6}, dropped {:.4}",
            e.epoch, e.mean_loss, e.drop_fraction
        );
        if let Some((prov, offset, truth)) = observe {
            curves.push(epoch_curve(e, offset, prov, truth));
        }
    };
    let report = train_observed(pairs, &tc, &mut model, &mut optimizer, &mut on_epoch)?;
    Ok(TrainedModel {
        model,
        optimizer,
        report,
    })
}

/// Trains the appearance model (and the motion model when enabled), writing
/// checkpoints and telemetry.
pub fn train_stage(config: &RunConfig, corpus: &Corpus, truth: Option<&GroundTruth>) -> Result<Trained> {
    create_out(config)?;
    let all = corpus.training();
    if all.appearance.is_empty() {
        return Err(Error::Usage("no cubes extracted; nothing to train on".into()));
    }
    let observe = truth.map(|t| (corpus.test.appearance.provenance.as_slice(), corpus.test_offset(), t));
    let mut curves = Vec::new();

    let pairs = appearance_pairs(&all.appearance, config)?;
    let model = new_model(config, config.depth, 1)?;
    let appearance = train_one(&pairs, config, model, observe, &mut curves)?;
    drop(pairs);
    write_checkpoint(&config.out.join(APPEARANCE_CHECKPOINT), &appearance.model, &appearance.optimizer)?;
    write_batch_telemetry(&config.out.join(APPEARANCE_TELEMETRY), &appearance.report.batches)?;
    if truth.is_some() {
        write_epoch_rl(&config.out.join(EPOCH_RL_FILE), &curves)?;
        write_epoch_curves(&config.out.join(EPOCH_CURVES_FILE), &curves)?;
        write_curves_svg(&config.out.join(CURVES_SVG), &curves)?;
    }

    let motion = match &all.motion {
        Some(m) => {
            let pairs = motion_pairs(&all.appearance.volumes, &m.volumes, config.paradigm, config.seed)?;
            let model = new_model(config, 2 * config.depth, 2)?;
            let trained = train_one(&pairs, config, model, None, &mut Vec::new())?;
            write_checkpoint(&config.out.join(MOTION_CHECKPOINT), &trained.model, &trained.optimizer)?;
            write_batch_telemetry(&config.out.join(MOTION_TELEMETRY), &trained.report.batches)?;
            Some(trained)
        }
        None => None,
    };
    Ok(Trained {
        appearance,
        motion,
        curves,
    })
}

fn par_score(model: &Autoencoder<f32>, pairs: &[ParadigmPair]) -> Result<Vec<f64>> {
    let parts = pairs
        .par_chunks(SCORE_TASK)
        .map(|c| score_pairs(model, c))
        .collect::<spr_core::Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Per-cube records of the test split, fused with statistics over all of
/// them.
pub fn score_records(
    config: &RunConfig,
    corpus: &Corpus,
    appearance: &Autoencoder<f32>,
    motion: Option<&Autoencoder<f32>>,
) -> Result<Vec<ScoreRecord>> {
    let offset = corpus.test_offset();
    let test = &corpus.test;
    let seed_of = |i: usize| cube_seed(config.seed, offset + i);
    let pairs = test
        .appearance
        .volumes
        .iter()
        .enumerate()
        .map(|(i, v)| Ok(apply_paradigm(v, config.paradigm, seed_of(i))?))
        .collect::<Result<Vec<_>>>()?;
    let s_app = par_score(appearance, &pairs)?;
    let s_mot = match (motion, &test.motion) {
        (Some(m), Some(ofcs)) => {
            let pairs = test
                .appearance
                .volumes
                .iter()
                .zip(&ofcs.volumes)
                .enumerate()
                .map(|(i, (s, o))| Ok(spr_core::cube::motion_pair(s, o, config.paradigm, seed_of(i))?))
                .collect::<Result<Vec<_>>>()?;
            Some(par_score(m, &pairs)?)
        }
        (None, None) => None,
        _ => return Err(Error::Usage("motion model and flow cubes must come together".into())),
    };
    let mut records: Vec<ScoreRecord> = test
        .appearance
        .provenance
        .iter()
        .enumerate()
        .map(|(i, p)| {
            ScoreRecord::new(
                p.video_id.clone(),
                p.center_frame,
                s_app[i],
                s_mot.as_ref().map(|m| m[i]),
            )
        })
        .collect();
    if !records.is_empty() {
        let fusion = FusionConfig::fit(&records, config.omega_a, config.omega_m)?;
        fuse(&mut records, &fusion);
    }
    Ok(records)
}

/// One row per frame of `videos`, carrying the channel scores of the cube
/// that set the frame's score.
pub fn frame_rows(records: &[ScoreRecord], videos: &[(String, usize)], smoothing: usize) -> Vec<ScoreRow> {
    let mut frames = frame_scores(records, videos);
    smooth_frame_scores(&mut frames, smoothing);
    let mut best: BTreeMap<(&str, usize), &ScoreRecord> = BTreeMap::new();
    for r in records {
        best.entry((r.video_id.as_str(), r.frame_index))
            .and_modify(|b| {
                if r.s_fused > b.s_fused {
                    *b = r;
                }
            })
            .or_insert(r);
    }
    frames
        .into_iter()
        .map(|f| {
            let top = best.get(&(f.video_id.as_str(), f.frame_index));
            ScoreRow {
                s_app: top.map(|r| r.s_app),
                s_mot: top.and_then(|r| r.s_mot),
                s_fused: f.score,
                video_id: f.video_id,
                frame_index: f.frame_index,
            }
        })
        .collect()
}

/// Scores the test split and writes the scores file.
pub fn score_stage(
    config: &RunConfig,
    corpus: &Corpus,
    appearance: &Autoencoder<f32>,
    motion: Option<&Autoencoder<f32>>,
) -> Result<Vec<ScoreRow>> {
    create_out(config)?;
    let records = score_records(config, corpus, appearance, motion)?;
    let videos = video_lengths(test_root(config)?)?;
    let rows = frame_rows(&records, &videos, config.smoothing_window);
    write_scores(&config.out.join(SCORES_FILE), &rows, config.motion_enhanced)?;
    Ok(rows)
}

/// Loads checkpoints written by [`train_stage`].
pub fn load_models(config: &RunConfig) -> Result<(Autoencoder<f32>, Option<Autoencoder<f32>>)> {
    let (app, _) = read_checkpoint(&config.out.join(APPEARANCE_CHECKPOINT))?;
    let mot = if config.motion_enhanced {
        Some(read_checkpoint(&config.out.join(MOTION_CHECKPOINT))?.0)
    } else {
        None
    };
    Ok((app, mot))
}

/// Frame-level metrics of score rows against labels; unlabeled frames are
/// ignored.
pub fn evaluate(rows: &[ScoreRow], labels: &Labels) -> Result<Metrics> {
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for r in rows {
        if let Some(&l) = labels.get(&(r.video_id.clone(), r.frame_index)) {
            scores.push(r.s_fused);
            truth.push(l);
        }
    }
    Ok(Metrics {
        auroc: auroc(&scores, &truth)?,
        eer: eer(&scores, &truth)?,
        n_frames: scores.len(),
        n_anomalous: truth.iter().filter(|&&l| l).count(),
    })
}

/// Evaluates the scores file of a run against the test split labels and
/// writes the metrics file.
pub fn eval_stage(config: &RunConfig) -> Result<Metrics> {
    let root = test_root(config)?;
    let labels = try_labels(root)?
        .ok_or_else(|| Error::format(root, "no labels.csv; cannot evaluate"))?;
    let rows = read_scores(&config.out.join(SCORES_FILE))?;
    let metrics = evaluate(&rows, &labels)?;
    write_metrics(&config.out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

pub struct RunSummary {
    pub trained: Trained,
    pub rows: Vec<ScoreRow>,
    pub metrics: Option<Metrics>,
    pub n_train_cubes: usize,
    pub n_test_cubes: usize,
}

/// The whole pipeline. Failures name the stage they came from.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let corpus = extract_stage(config).stage("extract")?;
    let truth = ground_truth(test_root(config)?).stage("extract")?;
    let trained = train_stage(config, &corpus, truth.as_ref()).stage("train")?;
    let rows = score_stage(
        config,
        &corpus,
        &trained.appearance.model,
        trained.motion.as_ref().map(|m| &m.model),
    )
    .stage("score")?;
    let metrics = match &truth {
        Some(_) => Some(eval_stage(config).stage("eval")?),
        None => None,
    };
    Ok(RunSummary {
        n_train_cubes: corpus.test_offset() + corpus.test.appearance.len(),
        n_test_cubes: corpus.test.appearance.len(),
        trained,
        rows,
        metrics,
    })
}
