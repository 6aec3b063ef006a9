//! Text artifacts of a run: telemetry and score CSVs, the metrics block and
//! an SVG of the training curves.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use spr_core::train::BatchTelemetry;

use crate::error::{Error, Result};

/// One frame of the scores file. `s_app`/`s_mot` come from the cube that
/// set the frame's fused score and are absent for frames without cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub video_id: String,
    pub frame_index: usize,
    pub s_app: Option<f64>,
    pub s_mot: Option<f64>,
    pub s_fused: f64,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_scores(path: &Path, rows: &[ScoreRow], motion: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    let mut header = vec!["video_id", "frame_index", "s_app"];
    if motion {
        header.push("s_mot");
    }
    header.push("s_fused");
    w.write_record(&header).map_err(Error::csv(path))?;
    for r in rows {
        let mut rec = vec![r.video_id.clone(), r.frame_index.to_string(), opt(r.s_app)];
        if motion {
            rec.push(opt(r.s_mot));
        }
        rec.push(r.s_fused.to_string());
        w.write_record(&rec).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let header = reader.headers().map_err(Error::csv(path))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(vid), Some(fi), Some(app), Some(fused)) =
        (col("video_id"), col("frame_index"), col("s_app"), col("s_fused"))
    else {
        return Err(Error::format(path, "missing scores columns"));
    };
    let mot = col("s_mot");
    let num = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::format(path, format!("line {}: bad number '{}'", line, s)))
    };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        let line = i + 2;
        rows.push(ScoreRow {
            video_id: rec[vid].to_string(),
            frame_index: rec[fi]
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad frame index", line)))?,
            s_app: num(&rec[app], line)?,
            s_mot: match mot {
                Some(m) => num(&rec[m], line)?,
                None => None,
            },
            s_fused: num(&rec[fused], line)?
                .ok_or_else(|| Error::format(path, format!("line {}: missing s_fused", line)))?,
        });
    }
    Ok(rows)
}

pub fn write_batch_telemetry(path: &Path, batches: &[BatchTelemetry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["epoch", "batch", "t", "lambda", "lambda_prime", "mean_loss", "drop_fraction"])
        .map_err(Error::csv(path))?;
    for b in batches {
        let (l, lp) = match b.thresholds {
            Some(th) => (th.lambda.to_string(), th.lambda_prime.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            b.epoch.to_string(),
            b.batch.to_string(),
            b.t.to_string(),
            l,
            lp,
            b.mean_loss.to_string(),
            b.drop_fraction.to_string(),
        ])
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Per-epoch measurements against ground truth, gathered during training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochCurve {
    pub epoch: usize,
    /// Mean frame loss (max over the frame's cubes) of normal frames.
    pub mean_rl_normal: f64,
    pub mean_rl_abnormal: f64,
    /// Frame-level AUROC of the training losses.
    pub auroc: Option<f64>,
    /// Cube-level statistics, when anomaly boxes are known.
    pub cube_rl_normal: Option<f64>,
    pub cube_rl_abnormal: Option<f64>,
    pub drop_normal: Option<f64>,
    pub drop_abnormal: Option<f64>,
}

pub fn write_epoch_rl(path: &Path, curves: &[EpochCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["epoch", "mean_rl_normal", "mean_rl_abnormal"])
        .map_err(Error::csv(path))?;
    for c in curves {
        w.write_record([
            c.epoch.to_string(),
            c.mean_rl_normal.to_string(),
            c.mean_rl_abnormal.to_string(),
        ])
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn write_epoch_curves(path: &Path, curves: &[EpochCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record([
        "epoch",
        "frame_auroc",
        "cube_rl_normal",
        "cube_rl_abnormal",
        "drop_normal",
        "drop_abnormal",
    ])
    .map_err(Error::csv(path))?;
    for c in curves {
        w.write_record([
            c.epoch.to_string(),
            opt(c.auroc),
            opt(c.cube_rl_normal),
            opt(c.cube_rl_abnormal),
            opt(c.drop_normal),
            opt(c.drop_abnormal),
        ])
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub auroc: f64,
    pub eer: f64,
    pub n_frames: usize,
    pub n_anomalous: usize,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "auroc={} eer={} n_frames={} n_anomalous={}",
            self.auroc, self.eer, self.n_frames, self.n_anomalous
        )
    }
}

impl FromStr for Metrics {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut m = Metrics {
            auroc: f64::NAN,
            eer: f64::NAN,
            n_frames: 0,
            n_anomalous: 0,
        };
        let mut seen = 0;
        for field in s.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| format!("bad field '{}'", field))?;
            let bad = || format!("bad value in '{}'", field);
            match k {
                "auroc" => m.auroc = v.parse().map_err(|_| bad())?,
                "eer" => m.eer = v.parse().map_err(|_| bad())?,
                "n_frames" => m.n_frames = v.parse().map_err(|_| bad())?,
                "n_anomalous" => m.n_anomalous = v.parse().map_err(|_| bad())?,
                _ => return Err(format!("unknown metric '{}'", k)),
            }
            seen += 1;
        }
        if seen != 4 {
            return Err("expected auroc, eer, n_frames and n_anomalous".into());
        }
        Ok(m)
    }
}

pub fn write_metrics(path: &Path, metrics: &Metrics) -> Result<()> {
    fs::write(path, format!("{}\n", metrics)).map_err(Error::io(path))
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.trim().parse().map_err(|e: String| Error::format(path, e))
}

/// Two stacked panels: frame loss of normal and abnormal frames, and AUROC,
/// per epoch.
pub fn curves_svg(curves: &[EpochCurve]) -> String {
    const W: f64 = 640.0;
    const PANEL: f64 = 220.0;
    const M: f64 = 50.0;
    let n = curves.len().max(2) as f64;
    let x = |epoch: usize| M + (epoch as f64 - 1.0) / (n - 1.0) * (W - 2.0 * M);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        w = W,
        h = 2.0 * PANEL + 2.0 * M
    );
    let mut panel = |top: f64, title: &str, series: &[(&str, &str, Vec<Option<f64>>)], fixed: Option<(f64, f64)>| {
        let vals: Vec<f64> = series.iter().flat_map(|s| s.2.iter().flatten().copied()).collect();
        let (lo, hi) = fixed.unwrap_or_else(|| {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else {
                (0.0, 1.0)
            }
        });
        let y = |v: f64| top + PANEL - (v - lo) / (hi - lo) * (PANEL - 20.0);
        svg += &format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <text x=\"4\" y=\"{t2}\">{hi:.3}</text>\n<text x=\"4\" y=\"{b}\">{lo:.3}</text>\n",
            M,
            top + 12.0,
            title,
            m = M,
            r = W - M,
            t = top + 20.0,
            t2 = top + 30.0,
            b = top + PANEL,
            hi = hi,
            lo = lo
        );
        for (k, (name, color, data)) in series.iter().enumerate() {
            let pts: Vec<String> = curves
                .iter()
                .zip(data)
                .filter_map(|(c, v)| v.map(|v| format!("{:.1},{:.1}", x(c.epoch), y(v))))
                .collect();
            svg += &format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n\
                 <text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n",
                color,
                pts.join(" "),
                W - M - 120.0,
                top + 12.0 + 14.0 * k as f64,
                color,
                name
            );
        }
    };
    panel(
        M - 20.0,
        "mean reconstruction loss per frame",
        &[
            ("normal", "#1f77b4", curves.iter().map(|c| Some(c.mean_rl_normal)).collect()),
            ("abnormal", "#d62728", curves.iter().map(|c| Some(c.mean_rl_abnormal)).collect()),
        ],
        None,
    );
    panel(
        M + PANEL + 20.0,
        "frame-level AUROC",
        &[("AUROC", "#2ca02c", curves.iter().map(|c| c.auroc).collect())],
        Some((0.0, 1.0)),
    );
    svg += &format!(
        "<text x=\"{}\" y=\"{}\">epoch 1..{}</text>\n</svg>\n",
        W / 2.0 - 30.0,
        2.0 * PANEL + 2.0 * M - 5.0,
        curves.len()
    );
    svg
}

pub fn write_curves_svg(path: &Path, curves: &[EpochCurve]) -> Result<()> {
    fs::write(path, curves_svg(curves)).map_err(Error::io(path))
}
