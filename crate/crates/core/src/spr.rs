//! Self-paced refinement: adaptive thresholds and closed-form sample weights.
//!
//! Per batch, the lower threshold is `λ' = μ + σ` of the batch losses and the
//! upper one `λ = max(μ + (c − t·r)·σ, λ')` with `c = 4` by default, shrinking
//! as the refinement counter `t` grows. Weights minimize
//! `Σ v_i L_i − ρ Σ ln(v_i + ρ/λ)` over `v ∈ [0, 1]^n`, `ρ = λλ'/(λ − λ')`:
//! losses at or above `λ` get 0, at or below `λ'` get 1, and in between
//! `ρ/L − λ'/(λ − λ')`.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::{Error, Result};

/// Coefficient of `σ` in the upper threshold at `t = 0`.
pub const DEFAULT_START_COEFF: f64 = 4.0;

/// Mean and population standard deviation.
pub fn batch_stats(losses: &[f64]) -> Result<(f64, f64)> {
    if losses.is_empty() {
        return Err(Error::Empty("batch losses"));
    }
    let n = losses.len() as f64;
    let mu = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / n;
    Ok((mu, Float::sqrt(var)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Upper threshold `λ`; losses at or above it are dropped.
    pub lambda: f64,
    /// Lower threshold `λ'`; losses at or below it keep full weight.
    pub lambda_prime: f64,
}

impl Thresholds {
    /// `ρ = λλ'/(λ − λ')`, undefined when the thresholds coincide.
    pub fn rho(&self) -> Option<f64> {
        (self.lambda > self.lambda_prime)
            .then(|| self.lambda * self.lambda_prime / (self.lambda - self.lambda_prime))
    }
}

/// Thresholds for refinement iteration `t` with shrink rate `r`.
pub fn pace_thresholds(losses: &[f64], t: u64, r: f64) -> Result<Thresholds> {
    pace_thresholds_with(losses, t, r, DEFAULT_START_COEFF)
}

/// [`pace_thresholds`] with a custom starting coefficient.
pub fn pace_thresholds_with(losses: &[f64], t: u64, r: f64, start_coeff: f64) -> Result<Thresholds> {
    let (mu, sigma) = batch_stats(losses)?;
    let lambda_prime = mu + sigma;
    let lambda = (mu + (start_coeff - t as f64 * r) * sigma).max(lambda_prime);
    Ok(Thresholds {
        lambda,
        lambda_prime,
    })
}

/// Per-sample weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn ones(n: usize) -> Self {
        WeightVector(alloc::vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of samples with weight exactly zero.
    pub fn drop_fraction(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().filter(|&&v| v == 0.0).count() as f64 / self.0.len() as f64
    }
}

/// Closed-form minimizer of the mixture-regularized objective for one loss.
///
/// With `λ = λ'` the soft band is empty and a loss equal to both thresholds
/// keeps weight 1.
pub fn weight_for(loss: f64, th: &Thresholds) -> f64 {
    if loss <= th.lambda_prime {
        1.0
    } else if loss >= th.lambda {
        0.0
    } else {
        let gap = th.lambda - th.lambda_prime;
        let rho = th.lambda * th.lambda_prime / gap;
        (rho / loss - th.lambda_prime / gap).clamp(0.0, 1.0)
    }
}

/// Closed-form weights for a batch of losses.
pub fn solve_weights(losses: &[f64], lambda: f64, lambda_prime: f64) -> Result<WeightVector> {
    if let Some(&bad) = losses.iter().find(|&&l| l < 0.0 || l.is_nan()) {
        return Err(Error::NegativeLoss(bad));
    }
    if lambda < lambda_prime {
        return Err(Error::invalid(format!(
            "upper threshold {} below lower threshold {}",
            lambda, lambda_prime
        )));
    }
    let th = Thresholds {
        lambda,
        lambda_prime,
    };
    Ok(WeightVector(losses.iter().map(|&l| weight_for(l, &th)).collect()))
}

/// `Σ v_i L_i − ρ Σ ln(v_i + ρ/λ)`; requires `λ > λ' > 0`.
pub fn spr_objective(losses: &[f64], weights: &[f64], lambda: f64, lambda_prime: f64) -> Result<f64> {
    if !(lambda > lambda_prime && lambda_prime > 0.0) {
        return Err(Error::invalid(format!(
            "objective needs λ > λ' > 0, got λ={} λ'={}",
            lambda, lambda_prime
        )));
    }
    if losses.len() != weights.len() {
        return Err(Error::invalid("losses and weights differ in length"));
    }
    let rho = lambda * lambda_prime / (lambda - lambda_prime);
    let shift = rho / lambda;
    Ok(losses
        .iter()
        .zip(weights)
        .map(|(&l, &v)| v * l - rho * Float::ln(v + shift))
        .sum())
}

/// Refinement counter and schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaceState {
    /// Refinement iterations performed so far.
    pub t: u64,
    /// Shrink rate `r`.
    pub shrink_rate: f64,
    pub start_coeff: f64,
}

impl PaceState {
    pub fn new(shrink_rate: f64) -> Self {
        PaceState {
            t: 0,
            shrink_rate,
            start_coeff: DEFAULT_START_COEFF,
        }
    }

    /// One refinement iteration: thresholds from the current `t`, then
    /// `t += 1`, then the weights. A batch whose losses are all equal keeps
    /// every sample.
    pub fn step(&mut self, losses: &[f64]) -> Result<(Thresholds, WeightVector)> {
        let th = pace_thresholds_with(losses, self.t, self.shrink_rate, self.start_coeff)?;
        self.t += 1;
        if losses.windows(2).all(|w| w[0] == w[1]) {
            if let Some(&bad) = losses.iter().find(|&&l| l < 0.0 || l.is_nan()) {
                return Err(Error::NegativeLoss(bad));
            }
            return Ok((th, WeightVector::ones(losses.len())));
        }
        let w = solve_weights(losses, th.lambda, th.lambda_prime)?;
        Ok((th, w))
    }
}
