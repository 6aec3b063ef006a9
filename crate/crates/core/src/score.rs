//! Anomaly scores: per-cube reconstruction loss, two-channel fusion with
//! corpus-wide standardization, and max-pooling onto frames.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::cube::{apply_paradigm, Paradigm, ParadigmPair, Volume};
use crate::nn::{per_sample_loss_masked, Autoencoder, Real};
use crate::train::gather;
use crate::{Error, Result};

/// Samples per forward pass when scoring.
pub const SCORE_CHUNK: usize = 256;

/// Masked reconstruction loss of every pair, in corpus order.
pub fn score_pairs<F: Real>(model: &Autoencoder<F>, pairs: &[ParadigmPair]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(SCORE_CHUNK) {
        let first = &chunk[0];
        let x = gather::<F>(first.input.chw(), chunk.iter().map(|p| p.input.clone()))?;
        let y = gather::<F>(first.target.chw(), chunk.iter().map(|p| p.target.clone()))?;
        let recon = model.forward(&x)?;
        out.extend(per_sample_loss_masked(&recon, &y, first.loss_channels.clone())?);
    }
    Ok(out)
}

/// Plain reconstruction loss of every cube.
pub fn score_cubes<F: Real>(model: &Autoencoder<F>, cubes: &[Volume]) -> Result<Vec<f64>> {
    let pairs = cubes
        .iter()
        .map(|c| apply_paradigm(c, Paradigm::Rec, 0))
        .collect::<Result<Vec<_>>>()?;
    score_pairs(model, &pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub video_id: String,
    pub frame_index: usize,
    /// Appearance reconstruction loss.
    pub s_app: f64,
    /// Motion reconstruction loss, when the motion model ran.
    pub s_mot: Option<f64>,
    pub s_fused: f64,
}

impl ScoreRecord {
    pub fn new(video_id: impl Into<String>, frame_index: usize, s_app: f64, s_mot: Option<f64>) -> Self {
        ScoreRecord {
            video_id: video_id.into(),
            frame_index,
            s_app,
            s_mot,
            s_fused: 0.0,
        }
    }
}

/// Channel weights and the standardization statistics they apply to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub omega_a: f64,
    pub omega_m: f64,
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_m: f64,
    pub sigma_m: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mu = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
    (mu, Float::sqrt(var))
}

impl FusionConfig {
    /// Statistics over every record of the run.
    pub fn fit(records: &[ScoreRecord], omega_a: f64, omega_m: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("score records"));
        }
        let (mu_a, sigma_a) = mean_std(records.iter().map(|r| r.s_app));
        let (mu_m, sigma_m) = mean_std(records.iter().filter_map(|r| r.s_mot));
        Ok(FusionConfig {
            omega_a,
            omega_m,
            mu_a,
            sigma_a,
            mu_m,
            sigma_m,
        })
    }

    /// `ω_a (S_a − μ_a)/σ_a + ω_m (S_m − μ_m)/σ_m`, dropping the motion term
    /// when it is absent.
    pub fn fused(&self, s_app: f64, s_mot: Option<f64>) -> f64 {
        let app = self.omega_a * standardize(s_app, self.mu_a, self.sigma_a);
        match s_mot {
            Some(m) => app + self.omega_m * standardize(m, self.mu_m, self.sigma_m),
            None => app,
        }
    }
}

/// `(x − μ)/σ`, or 0 for a constant channel.
pub fn standardize(x: f64, mu: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        (x - mu) / sigma
    } else {
        0.0
    }
}

/// Fills `s_fused` of every record.
pub fn fuse(records: &mut [ScoreRecord], config: &FusionConfig) {
    for r in records.iter_mut() {
        r.s_fused = config.fused(r.s_app, r.s_mot);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub video_id: String,
    pub frame_index: usize,
    pub score: f64,
}

/// Max fused score per frame for every frame of `videos` (`(id, frame
/// count)`). Frames without cubes take the smallest fused score of the run.
pub fn frame_scores(records: &[ScoreRecord], videos: &[(String, usize)]) -> Vec<FrameScore> {
    let floor = records
        .iter()
        .map(|r| r.s_fused)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    let mut best: BTreeMap<(&str, usize), f64> = BTreeMap::new();
    for r in records {
        best.entry((r.video_id.as_str(), r.frame_index))
            .and_modify(|s| *s = s.max(r.s_fused))
            .or_insert(r.s_fused);
    }
    videos
        .iter()
        .flat_map(|(id, count)| {
            let best = &best;
            (0..*count).map(move |f| FrameScore {
                video_id: id.clone(),
                frame_index: f,
                score: best.get(&(id.as_str(), f)).copied().unwrap_or(floor),
            })
        })
        .collect()
}

/// Centered moving average of width `window` within each video. Scores must
/// be grouped by video in frame order, as [`frame_scores`] returns them.
pub fn smooth_frame_scores(scores: &mut [FrameScore], window: usize) {
    if window <= 1 {
        return;
    }
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    let mut start = 0;
    while start < scores.len() {
        let mut end = start;
        while end < scores.len() && scores[end].video_id == scores[start].video_id {
            end += 1;
        }
        let raw: Vec<f64> = scores[start..end].iter().map(|s| s.score).collect();
        for i in 0..raw.len() {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(raw.len() - 1);
            scores[start + i].score = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        }
        start = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(v: &str, f: usize, s: f64) -> ScoreRecord {
        ScoreRecord {
            s_fused: s,
            ..ScoreRecord::new(v, f, s, None)
        }
    }

    #[test]
    fn centered_scores_fuse_to_zero() {
        let cfg = FusionConfig {
            omega_a: 0.5,
            omega_m: 1.0,
            mu_a: 2.0,
            sigma_a: 1.0,
            mu_m: 3.0,
            sigma_m: 2.0,
        };
        assert_eq!(cfg.fused(2.0, Some(3.0)), 0.0);
        // standardized 2 and 1
        assert_eq!(cfg.fused(4.0, Some(5.0)), 2.0);
        assert_eq!(cfg.fused(4.0, None), 1.0);
    }

    #[test]
    fn constant_channel_standardizes_to_zero() {
        let mut rs = vec![
            ScoreRecord::new("v", 0, 1.0, Some(0.5)),
            ScoreRecord::new("v", 1, 3.0, Some(0.5)),
        ];
        let cfg = FusionConfig::fit(&rs, 0.5, 1.0).unwrap();
        assert_eq!(cfg.sigma_m, 0.0);
        fuse(&mut rs, &cfg);
        assert_eq!(rs[0].s_fused, -0.5);
        assert_eq!(rs[1].s_fused, 0.5);
    }

    #[test]
    fn frame_max_and_empty_floor() {
        let rs = vec![rec("a", 0, 1.0), rec("a", 0, 3.0), rec("a", 0, 2.0), rec("a", 2, -0.7)];
        let fs = frame_scores(&rs, &[("a".to_string(), 3)]);
        assert_eq!(fs.iter().map(|f| f.score).collect::<Vec<_>>(), vec![3.0, -0.7, -0.7]);
    }

    #[test]
    fn smoothing_averages_within_videos() {
        let mut fs = frame_scores(
            &[rec("a", 0, 3.0), rec("b", 0, 9.0)],
            &[("a".to_string(), 3), ("b".to_string(), 1)],
        );
        // floor is 3.0, so a = [3, 3, 3]
        smooth_frame_scores(&mut fs, 3);
        assert_eq!(fs[0].score, 3.0);
        assert_eq!(fs[3].score, 9.0);
        let mut g = vec![
            FrameScore { video_id: "v".into(), frame_index: 0, score: 0.0 },
            FrameScore { video_id: "v".into(), frame_index: 1, score: 3.0 },
            FrameScore { video_id: "v".into(), frame_index: 2, score: 0.0 },
        ];
        smooth_frame_scores(&mut g, 3);
        assert_eq!(g.iter().map(|f| f.score).collect::<Vec<_>>(), vec![1.5, 1.0, 1.5]);
    }
}
