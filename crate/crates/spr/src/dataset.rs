//! Dataset layout on disk: `<root>/<video_id>/<frame>.<ext>` grayscale
//! rasters, plus optional `labels.csv` (`video_id,frame_index,label`) and
//! `anomaly_boxes.csv` (`video_id,frame_index,x0,y0,x1,y1`).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use spr_core::frame::{Frame, VideoClip};
use spr_core::localize::BoundingBox;

use crate::error::{Error, Result};

pub const LABELS_FILE: &str = "labels.csv";
pub const ANOMALY_BOXES_FILE: &str = "anomaly_boxes.csv";

const FRAME_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "bmp", "tif", "tiff"];

/// Frame-level ground truth keyed by `(video_id, frame_index)`.
pub type Labels = BTreeMap<(String, usize), bool>;

/// Extent of planted anomalies keyed by `(video_id, frame_index)`.
pub type AnomalyBoxes = BTreeMap<(String, usize), Vec<BoundingBox>>;

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(dir)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads one video directory; frames are taken in lexicographic file order.
pub fn load_video(dir: &Path) -> Result<VideoClip> {
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::format(dir, "video directory name is not UTF-8"))?
        .to_string();
    let files: Vec<PathBuf> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| is_frame_file(p))
        .collect();
    if files.is_empty() {
        return Err(Error::format(dir, "no frames"));
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut dims = None;
    for path in &files {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        match dims {
            None => dims = Some((w, h)),
            Some((w0, h0)) if (w0, h0) != (w, h) => {
                return Err(Error::format(
                    path,
                    format!("frame is {}x{} but the video is {}x{}", w, h, w0, h0),
                ))
            }
            _ => {}
        }
        frames.push(Frame::from_luma8(w, h, img.as_raw())?);
    }
    Ok(VideoClip::new(id, frames)?)
}

/// Video directories of a dataset root, sorted by name.
pub fn video_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if dirs.is_empty() {
        return Err(Error::format(root, "no video directories"));
    }
    Ok(dirs)
}

/// Loads every video under `root`, in name order.
pub fn load_dataset(root: &Path) -> Result<Vec<VideoClip>> {
    video_dirs(root)?.par_iter().map(|d| load_video(d)).collect()
}

pub fn read_labels(path: &Path) -> Result<Labels> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let mut labels = Labels::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(Error::csv(path))?;
        let line = i + 2;
        if row.len() != 3 {
            return Err(Error::format(path, format!("line {}: expected 3 columns", line)));
        }
        let frame: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad frame index '{}'", line, &row[1])))?;
        let label = match row[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::format(
                    path,
                    format!("line {}: label must be 0 or 1, got '{}'", line, other),
                ))
            }
        };
        labels.insert((row[0].trim().to_string(), frame), label);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &Labels) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["video_id", "frame_index", "label"]).map_err(Error::csv(path))?;
    for ((video, frame), &label) in labels {
        w.write_record([video.as_str(), &frame.to_string(), if label { "1" } else { "0" }])
            .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_anomaly_boxes(path: &Path) -> Result<AnomalyBoxes> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let mut boxes = AnomalyBoxes::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(Error::csv(path))?;
        let line = i + 2;
        if row.len() != 6 {
            return Err(Error::format(path, format!("line {}: expected 6 columns", line)));
        }
        let mut nums = [0usize; 5];
        for (k, n) in nums.iter_mut().enumerate() {
            *n = row[k + 1]
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad integer '{}'", line, &row[k + 1])))?;
        }
        let [frame, x0, y0, x1, y1] = nums;
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::format(path, format!("line {}: empty box", line)));
        }
        boxes
            .entry((row[0].trim().to_string(), frame))
            .or_default()
            .push(BoundingBox {
                x0,
                y0,
                x1,
                y1,
                frame_index: frame,
            });
    }
    Ok(boxes)
}

pub fn write_anomaly_boxes(path: &Path, boxes: &AnomalyBoxes) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["video_id", "frame_index", "x0", "y0", "x1", "y1"])
        .map_err(Error::csv(path))?;
    for ((video, frame), list) in boxes {
        for b in list {
            w.write_record([
                video.clone(),
                frame.to_string(),
                b.x0.to_string(),
                b.y0.to_string(),
                b.x1.to_string(),
                b.y1.to_string(),
            ])
            .map_err(Error::csv(path))?;
        }
    }
    w.flush().map_err(Error::io(path))
}

/// Labels of `root`, if it has a labels file.
pub fn try_labels(root: &Path) -> Result<Option<Labels>> {
    let path = root.join(LABELS_FILE);
    if path.is_file() {
        read_labels(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Anomaly boxes of `root`, if it has a boxes file.
pub fn try_anomaly_boxes(root: &Path) -> Result<Option<AnomalyBoxes>> {
    let path = root.join(ANOMALY_BOXES_FILE);
    if path.is_file() {
        read_anomaly_boxes(&path).map(Some)
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub videos: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Number of frames labeled anomalous, when labels exist.
    pub anomalous: Option<usize>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn anomaly_rate(&self) -> Option<f64> {
        self.anomalous.map(|a| a as f64 / self.frames.max(1) as f64)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "videos={} frames={} resolution={}x{}",
            self.videos, self.frames, self.width, self.height
        )?;
        if let (Some(a), Some(rate)) = (self.anomalous, self.anomaly_rate()) {
            write!(f, " anomalous={} anomaly_rate={:.4}", a, rate)?;
        }
        for w in &self.warnings {
            write!(f, "\nwarning: {}", w)?;
        }
        Ok(())
    }
}

/// Frame counts, resolution and anomaly rate of a dataset. A missing labels
/// file only produces a warning; invalid labels are an error.
pub fn describe(root: &Path) -> Result<Summary> {
    let mut videos = 0;
    let mut frames = 0;
    let mut size = None;
    let mut counts = BTreeMap::new();
    for dir in video_dirs(root)? {
        let files: Vec<PathBuf> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| is_frame_file(p))
            .collect();
        let Some(first) = files.first() else {
            return Err(Error::format(&dir, "no frames"));
        };
        let dims = image::image_dimensions(first).map_err(|source| Error::Image {
            path: first.clone(),
            source,
        })?;
        match size {
            None => size = Some(dims),
            Some(s) if s != dims => {
                return Err(Error::format(&dir, format!("resolution {:?} differs from {:?}", dims, s)))
            }
            _ => {}
        }
        let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        counts.insert(id, files.len());
        videos += 1;
        frames += files.len();
    }
    let (width, height) = size.map(|(w, h)| (w as usize, h as usize)).unwrap_or((0, 0));
    let mut warnings = Vec::new();
    let anomalous = match try_labels(root)? {
        None => {
            warnings.push(format!("{} missing; anomaly rate unknown", LABELS_FILE));
            None
        }
        Some(labels) => {
            for (video, frame) in labels.keys() {
                if counts.get(video).map_or(true, |&n| *frame >= n) {
                    return Err(Error::format(
                        root.join(LABELS_FILE),
                        format!("label for {} frame {} has no frame", video, frame),
                    ));
                }
            }
            if labels.len() != frames {
                warnings.push(format!("{} of {} frames labeled", labels.len(), frames));
            }
            Some(labels.values().filter(|&&l| l).count())
        }
    };
    Ok(Summary {
        videos,
        frames,
        width,
        height,
        anomalous,
        warnings,
    })
}

/// `(video_id, frame count)` of every video under `root`, without decoding
/// any frame.
pub fn video_lengths(root: &Path) -> Result<Vec<(String, usize)>> {
    video_dirs(root)?
        .into_iter()
        .map(|dir| {
            let id = dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::format(&dir, "video directory name is not UTF-8"))?
                .to_string();
            let n = sorted_entries(&dir)?.iter().filter(|p| is_frame_file(p)).count();
            Ok((id, n))
        })
        .collect()
}
