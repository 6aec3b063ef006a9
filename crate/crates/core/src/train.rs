//! The self-paced refinement training loop.
//!
//! Every epoch visits a fresh random permutation of the corpus in batches.
//! During the first `warmup_epochs` epochs each batch is a plain
//! reconstruction step. Afterwards each batch computes its thresholds from
//! the current pre-update losses, advances the refinement counter, solves
//! the weights and takes a weighted step. Setting `warmup_epochs == epochs`
//! turns the loop into ordinary unweighted training.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::{motion_pair, Paradigm, ParadigmPair, Volume};
use crate::nn::{apply_weighted_step, per_sample_loss_masked, AdamState, Autoencoder, Real, Tensor4};
use crate::spr::{PaceState, Thresholds, WeightVector, DEFAULT_START_COEFF};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub shrink_rate: f64,
    pub start_coeff: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Keep per-sample losses and weights of every epoch in the report.
    pub record_samples: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs: 30,
            warmup_epochs: 5,
            shrink_rate: 0.005,
            start_coeff: DEFAULT_START_COEFF,
            seed: 0,
            record_samples: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.epochs == 0 || self.warmup_epochs > self.epochs {
            return Err(Error::invalid(format!(
                "need epochs >= 1 and warm-up ({}) <= epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.shrink_rate > 0.0) {
            return Err(Error::invalid("shrink rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchTelemetry {
    pub epoch: usize,
    pub batch: usize,
    /// Refinement counter after this batch.
    pub t: u64,
    /// `None` during warm-up.
    pub thresholds: Option<Thresholds>,
    /// Unweighted mean loss of the batch before the update.
    pub mean_loss: f64,
    pub drop_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochTelemetry {
    pub epoch: usize,
    pub mean_loss: f64,
    pub drop_fraction: f64,
    /// Pre-update loss of every corpus sample, by corpus index (empty unless
    /// recording was requested).
    pub sample_losses: Vec<f64>,
    pub sample_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub batches: Vec<BatchTelemetry>,
    pub epochs: Vec<EpochTelemetry>,
}

fn corpus_layout(pairs: &[ParadigmPair]) -> Result<([usize; 3], [usize; 3], Range<usize>)> {
    let first = pairs.first().ok_or(Error::Empty("training corpus"))?;
    let layout = (first.input.chw(), first.target.chw(), first.loss_channels.clone());
    for (i, p) in pairs.iter().enumerate() {
        if p.input.chw() != layout.0 || p.target.chw() != layout.1 || p.loss_channels != layout.2 {
            return Err(Error::shape(
                format!("corpus sample {}", i),
                "samples differ in shape or loss channels",
            ));
        }
    }
    Ok(layout)
}

pub(crate) fn gather<F: Real>(chw: [usize; 3], volumes: impl Iterator<Item = Volume>) -> Result<Tensor4<F>> {
    let per: usize = chw.iter().product();
    let mut data = Vec::new();
    let mut n = 0;
    for v in volumes {
        debug_assert_eq!(v.data().len(), per);
        data.extend(v.data().iter().map(|&x| F::of(x as f64)));
        n += 1;
    }
    Tensor4::from_vec([n, chw[0], chw[1], chw[2]], data)
}

/// Trains `model` on `pairs`, see the module docs.
pub fn train<F: Real>(
    pairs: &[ParadigmPair],
    config: &TrainConfig,
    model: &mut Autoencoder<F>,
    optimizer: &mut AdamState<F>,
) -> Result<TrainReport> {
    train_observed(pairs, config, model, optimizer, &mut |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed<F: Real>(
    pairs: &[ParadigmPair],
    config: &TrainConfig,
    model: &mut Autoencoder<F>,
    optimizer: &mut AdamState<F>,
    on_epoch: &mut dyn FnMut(&EpochTelemetry),
) -> Result<TrainReport> {
    config.validate()?;
    let (in_chw, out_chw, channels) = corpus_layout(pairs)?;
    if in_chw != model.input_shape() || out_chw != model.output_shape() {
        return Err(Error::shape(
            "train",
            format!(
                "corpus {:?} -> {:?} does not fit model {:?} -> {:?}",
                in_chw,
                out_chw,
                model.input_shape(),
                model.output_shape()
            ),
        ));
    }

    let n = pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut pace = PaceState {
        t: 0,
        shrink_rate: config.shrink_rate,
        start_coeff: config.start_coeff,
    };
    let mut report = TrainReport::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut dropped = 0usize;
        let mut sample_losses = if config.record_samples { vec![0.0; n] } else { Vec::new() };
        let mut sample_weights = if config.record_samples { vec![0.0; n] } else { Vec::new() };

        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = b + 1;
            let x: Tensor4<F> = gather(in_chw, idx.iter().map(|&i| pairs[i].input.clone()))?;
            let y: Tensor4<F> = gather(out_chw, idx.iter().map(|&i| pairs[i].target.clone()))?;
            let pass = model.forward_pass(&x)?;
            let losses = per_sample_loss_masked(pass.output(), &y, channels.clone())?;
            if losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            let (thresholds, weights) = if epoch <= config.warmup_epochs {
                (None, WeightVector::ones(losses.len()))
            } else {
                let (th, w) = pace.step(&losses)?;
                (Some(th), w)
            };
            apply_weighted_step(model, optimizer, &pass, &y, weights.as_slice(), channels.clone())
                .map_err(|e| match e {
                    Error::Diverged => Error::NonFiniteLoss { epoch, batch },
                    other => other,
                })?;

            let batch_sum: f64 = losses.iter().sum();
            loss_sum += batch_sum;
            let batch_dropped = weights.as_slice().iter().filter(|&&v| v == 0.0).count();
            dropped += batch_dropped;
            if config.record_samples {
                for ((&i, &l), &v) in idx.iter().zip(&losses).zip(weights.as_slice()) {
                    sample_losses[i] = l;
                    sample_weights[i] = v;
                }
            }
            report.batches.push(BatchTelemetry {
                epoch,
                batch,
                t: pace.t,
                thresholds,
                mean_loss: batch_sum / losses.len() as f64,
                drop_fraction: batch_dropped as f64 / losses.len() as f64,
            });
        }
        let summary = EpochTelemetry {
            epoch,
            mean_loss: loss_sum / n as f64,
            drop_fraction: dropped as f64 / n as f64,
            sample_losses,
            sample_weights,
        };
        on_epoch(&summary);
        report.epochs.push(summary);
    }
    Ok(report)
}

/// Cross-modal training: each appearance cube (transformed by `paradigm`)
/// is mapped onto its flow cube.
pub fn train_motion<F: Real>(
    stcs: &[Volume],
    ofcs: &[Volume],
    paradigm: Paradigm,
    config: &TrainConfig,
    model: &mut Autoencoder<F>,
    optimizer: &mut AdamState<F>,
) -> Result<TrainReport> {
    let pairs = motion_pairs(stcs, ofcs, paradigm, config.seed)?;
    train(&pairs, config, model, optimizer)
}

/// Pairs each appearance cube with its flow cube.
pub fn motion_pairs(
    stcs: &[Volume],
    ofcs: &[Volume],
    paradigm: Paradigm,
    seed: u64,
) -> Result<Vec<ParadigmPair>> {
    if stcs.len() != ofcs.len() {
        return Err(Error::invalid(format!(
            "{} appearance cubes but {} flow cubes",
            stcs.len(),
            ofcs.len()
        )));
    }
    stcs.iter()
        .zip(ofcs)
        .enumerate()
        .map(|(i, (s, o))| motion_pair(s, o, paradigm, crate::cube::cube_seed(seed, i)))
        .collect()
}
