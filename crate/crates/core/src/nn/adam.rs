use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::model::{Autoencoder, Gradients};
use super::real::Real;
use crate::{Error, Result};

/// Adam hyperparameters. `weight_decay` is decoupled and defaults to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig, model: &Autoencoder<F>) -> Self {
        let zeros = |p: &&[F]| vec![F::zero(); p.len()];
        let params = model.params();
        AdamState {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    /// Rebuilds a state from stored moments, checking them against `model`.
    pub fn from_parts(
        config: AdamConfig,
        step: u64,
        m: Vec<Vec<F>>,
        v: Vec<Vec<F>>,
        model: &Autoencoder<F>,
    ) -> Result<Self> {
        let params = model.params();
        let congruent = |moments: &Vec<Vec<F>>| {
            moments.len() == params.len()
                && moments.iter().zip(&params).all(|(a, p)| a.len() == p.len())
        };
        if !congruent(&m) || !congruent(&v) {
            return Err(Error::shape(
                "optimizer",
                format!("moments do not match {} parameter tensors", params.len()),
            ));
        }
        Ok(AdamState { config, step, m, v })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<F>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<F>] {
        &self.v
    }

    /// Counts a step whose gradient is identically zero without touching
    /// parameters or moments.
    pub(crate) fn skip(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, model: &mut Autoencoder<F>, grads: &Gradients<F>) -> Result<()> {
        let g = grads.tensors();
        if g.len() != self.m.len() {
            return Err(Error::shape(
                "optimizer",
                format!("{} gradient tensors for {} moments", g.len(), self.m.len()),
            ));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - num_traits::Float::powi(c.beta1, t);
        let bc2 = 1.0 - num_traits::Float::powi(c.beta2, t);
        let b1 = F::of(c.beta1);
        let b2 = F::of(c.beta2);
        let one = F::one();
        let step_size = F::of(c.learning_rate / bc1);
        let inv_bc2 = F::of(1.0 / bc2);
        let eps = F::of(c.epsilon);
        let decay = F::of(1.0 - c.learning_rate * c.weight_decay);
        let mut params = model.params_mut();
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, gi) = (&mut self.m[i], &mut self.v[i], g[i]);
            if gi.len() != p.len() {
                return Err(Error::shape("optimizer", format!("tensor {} gradient length", i)));
            }
            for j in 0..p.len() {
                let gj = gi[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                if c.weight_decay != 0.0 {
                    p[j] *= decay;
                }
                p[j] -= step_size * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
