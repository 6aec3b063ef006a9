//! Run configuration: a plain `key = value` file with `#` comments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spr_core::cube::{CubeShape, Paradigm};
use spr_core::flow::FlowParams;
use spr_core::localize::LocalizeParams;
use spr_core::nn::AdamConfig;
use spr_core::train::TrainConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Train and evaluate on the test split alone.
    Partial,
    /// Train on the union of both splits, evaluate on the test split.
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Whole-frame cubes, no refinement.
    Fbr,
    /// Localized cubes, no refinement.
    Lbr,
    /// Localized cubes with self-paced refinement after warm-up.
    LbrSpr,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "partial" => Ok(Mode::Partial),
            "merge" => Ok(Mode::Merge),
            _ => Err(format!("unknown mode '{}' (expected partial or merge)", s)),
        }
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "FBR" => Ok(Baseline::Fbr),
            "LBR" => Ok(Baseline::Lbr),
            "LBR-SPR" | "LBR_SPR" | "SPR" => Ok(Baseline::LbrSpr),
            _ => Err(format!("unknown baseline '{}' (expected FBR, LBR or LBR-SPR)", s)),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Partial => "partial",
            Mode::Merge => "merge",
        })
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Fbr => "FBR",
            Baseline::Lbr => "LBR",
            Baseline::LbrSpr => "LBR-SPR",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Test split root (the only root in partial mode).
    pub dataset: Option<PathBuf>,
    /// Training split root, merged in for training in merge mode.
    pub train_dataset: Option<PathBuf>,
    pub mode: Mode,
    pub paradigm: Paradigm,
    pub baseline: Baseline,
    pub motion_enhanced: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub shrink_rate: f64,
    pub pace_start_coeff: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub omega_a: f64,
    pub omega_m: f64,
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub diff_threshold: f32,
    pub dilation: usize,
    pub min_area: usize,
    pub min_box: usize,
    pub merge_overlap: f64,
    pub flow_block: usize,
    pub flow_radius: usize,
    /// Moving-average window over frame scores; 0 or 1 disables it.
    pub smoothing_window: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let adam = AdamConfig::default();
        let loc = LocalizeParams::default();
        let flow = FlowParams::default();
        let shape = CubeShape::default();
        RunConfig {
            dataset: None,
            train_dataset: None,
            mode: Mode::Partial,
            paradigm: Paradigm::Rec,
            baseline: Baseline::LbrSpr,
            motion_enhanced: false,
            batch_size: train.batch_size,
            epochs: train.epochs,
            warmup_epochs: train.warmup_epochs,
            shrink_rate: train.shrink_rate,
            pace_start_coeff: train.start_coeff,
            seed: train.seed,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            weight_decay: adam.weight_decay,
            omega_a: 0.5,
            omega_m: 1.0,
            height: shape.height,
            width: shape.width,
            depth: shape.depth,
            base_channels: 32,
            diff_threshold: loc.diff_threshold,
            dilation: loc.dilation,
            min_area: loc.min_area,
            min_box: loc.min_box,
            merge_overlap: loc.merge_overlap,
            flow_block: flow.block,
            flow_radius: flow.radius,
            smoothing_window: 0,
            out: PathBuf::from("spr-out"),
        }
    }
}

/// Every accepted key. `r` is an alias of `shrink_rate`.
pub const KEYS: &[&str] = &[
    "dataset",
    "train_dataset",
    "mode",
    "paradigm",
    "baseline",
    "motion_enhanced",
    "batch_size",
    "epochs",
    "warmup_epochs",
    "shrink_rate",
    "r",
    "pace_start_coeff",
    "seed",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_epsilon",
    "weight_decay",
    "omega_a",
    "omega_m",
    "height",
    "width",
    "depth",
    "base_channels",
    "diff_threshold",
    "dilation",
    "min_area",
    "min_box",
    "merge_overlap",
    "flow_block",
    "flow_radius",
    "smoothing_window",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{} expects a {}, got '{}'", key, std::any::type_name::<T>(), value))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("{} expects true or false, got '{}'", key, value)),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "train_dataset" => self.train_dataset = Some(PathBuf::from(value)),
            "mode" => self.mode = value.parse()?,
            "paradigm" => self.paradigm = value.parse().map_err(|e| format!("{}", e))?,
            "baseline" => self.baseline = value.parse()?,
            "motion_enhanced" => self.motion_enhanced = parse_bool(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "shrink_rate" | "r" => self.shrink_rate = parse(key, value)?,
            "pace_start_coeff" => self.pace_start_coeff = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam_epsilon" => self.adam_epsilon = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "omega_a" => self.omega_a = parse(key, value)?,
            "omega_m" => self.omega_m = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "diff_threshold" => self.diff_threshold = parse(key, value)?,
            "dilation" => self.dilation = parse(key, value)?,
            "min_area" => self.min_area = parse(key, value)?,
            "min_box" => self.min_box = parse(key, value)?,
            "merge_overlap" => self.merge_overlap = parse(key, value)?,
            "flow_block" => self.flow_block = parse(key, value)?,
            "flow_radius" => self.flow_radius = parse(key, value)?,
            "smoothing_window" => self.smoothing_window = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => {
                return Err(format!(
                    "unknown key '{}'; valid keys: {}",
                    key,
                    KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_str(text)?;
        Ok(config)
    }

    /// Applies config text on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected 'key = value', got '{}'", content),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|message| Error::Config { line, message })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse_str(&text)
    }

    /// Epochs before refinement starts: all of them unless the baseline
    /// refines.
    pub fn effective_warmup(&self) -> usize {
        match self.baseline {
            Baseline::LbrSpr => self.warmup_epochs,
            Baseline::Fbr | Baseline::Lbr => self.epochs,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            warmup_epochs: self.effective_warmup(),
            shrink_rate: self.shrink_rate,
            start_coeff: self.pace_start_coeff,
            seed,
            record_samples: false,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn cube_shape(&self) -> CubeShape {
        CubeShape {
            depth: self.depth,
            height: self.height,
            width: self.width,
        }
    }

    pub fn localize_params(&self) -> LocalizeParams {
        LocalizeParams {
            diff_threshold: self.diff_threshold,
            dilation: self.dilation,
            min_area: self.min_area,
            min_box: self.min_box,
            merge_overlap: self.merge_overlap,
        }
    }

    pub fn flow_params(&self) -> FlowParams {
        FlowParams {
            block: self.flow_block,
            radius: self.flow_radius,
        }
    }

    /// Cross-field checks not covered by single-key parsing.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if self.dataset.is_none() {
            return bad("no dataset given".into());
        }
        if self.mode == Mode::Merge && self.train_dataset.is_none() {
            return bad("merge mode needs train_dataset as well as dataset".into());
        }
        if self.height % 8 != 0 || self.width % 8 != 0 || self.height == 0 || self.width == 0 {
            return bad(format!(
                "cube size {}x{} must be a positive multiple of 8",
                self.height, self.width
            ));
        }
        if self.depth == 0 || (self.paradigm == Paradigm::Prd && self.depth < 2) {
            return bad(format!("depth {} too small for {}", self.depth, self.paradigm));
        }
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        self.train_config(self.seed).validate()?;
        Ok(())
    }
}
