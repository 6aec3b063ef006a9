use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::per_sample_loss;
use super::model::Autoencoder;
use super::real::Real;
use super::tensor::Tensor4;
use crate::Result;

/// Parameters probed per weight/bias tensor.
const PROBES_PER_TENSOR: usize = 32;

/// Compares backpropagated gradients of `sum_i L_i` with central differences.
///
/// Up to 32 entries of every parameter tensor are probed (all of them when the
/// tensor is smaller). Returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<F: Real>(
    model: &Autoencoder<F>,
    batch: &Tensor4<F>,
    targets: &Tensor4<F>,
    epsilon: f64,
) -> Result<f64> {
    let pass = model.forward_pass(batch)?;
    let ones: Vec<f64> = core::iter::repeat(1.0).take(batch.batch()).collect();
    let grads = model.gradients(&pass, targets, &ones, 0..targets.channels())?;
    let analytic: Vec<Vec<F>> = grads.tensors().iter().map(|g| g.to_vec()).collect();

    let objective = |m: &Autoencoder<F>| -> Result<f64> {
        let out = m.forward(batch)?;
        Ok(per_sample_loss(&out, targets)?.iter().sum())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (t, g) in analytic.iter().enumerate() {
        let picks: Vec<usize> = if g.len() <= PROBES_PER_TENSOR {
            (0..g.len()).collect()
        } else {
            sample(&mut rng, g.len(), PROBES_PER_TENSOR).into_vec()
        };
        for j in picks {
            let orig = probe.params()[t][j];
            probe.params_mut()[t][j] = <F as Real>::of(Real::as_f64(orig) + epsilon);
            let up = objective(&probe)?;
            probe.params_mut()[t][j] = <F as Real>::of(Real::as_f64(orig) - epsilon);
            let down = objective(&probe)?;
            probe.params_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = Real::as_f64(g[j]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
