//! Writes a generated synthetic corpus in the dataset layout.

use std::fs;
use std::path::Path;

use image::GrayImage;
use rayon::prelude::*;
use spr_core::synth::{generate_video, CorpusSpec, SynthVideo};

use crate::dataset::{
    describe, write_anomaly_boxes, write_labels, AnomalyBoxes, Labels, Summary, ANOMALY_BOXES_FILE,
    LABELS_FILE,
};
use crate::error::{Error, Result};

fn write_video(root: &Path, video: &SynthVideo) -> Result<()> {
    let dir = root.join(&video.id);
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    for (i, pixels) in video.frames.iter().enumerate() {
        let path = dir.join(format!("frame_{:05}.png", i));
        let img = GrayImage::from_raw(video.width as u32, video.height as u32, pixels.clone())
            .ok_or_else(|| Error::format(&path, "frame buffer does not match its size"))?;
        img.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

/// Renders the corpus under `root` (videos in parallel) with its labels and
/// anomaly boxes, and returns the summary of what was written.
pub fn write_corpus(spec: &CorpusSpec, root: &Path) -> Result<Summary> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(Error::io(root))?;
    let videos = (0..spec.n_videos)
        .into_par_iter()
        .map(|i| {
            let v = generate_video(spec, i)?;
            write_video(root, &v)?;
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut labels = Labels::new();
    let mut boxes = AnomalyBoxes::new();
    for v in &videos {
        for (f, (&l, b)) in v.labels.iter().zip(&v.anomaly_boxes).enumerate() {
            labels.insert((v.id.clone(), f), l);
            if let Some(b) = b {
                boxes.entry((v.id.clone(), f)).or_default().push(*b);
            }
        }
    }
    write_labels(&root.join(LABELS_FILE), &labels)?;
    write_anomaly_boxes(&root.join(ANOMALY_BOXES_FILE), &boxes)?;
    describe(root)
}
