use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use super::real::Real;
use super::tensor::Tensor4;
use crate::{Error, Result};

/// Mean squared reconstruction error of every sample, accumulated in `f64`.
pub fn per_sample_loss<F: Real>(recon: &Tensor4<F>, target: &Tensor4<F>) -> Result<Vec<f64>> {
    per_sample_loss_masked(recon, target, 0..target.channels())
}

/// Like [`per_sample_loss`] but averaging only over `channels`.
pub fn per_sample_loss_masked<F: Real>(
    recon: &Tensor4<F>,
    target: &Tensor4<F>,
    channels: Range<usize>,
) -> Result<Vec<f64>> {
    check_loss_shapes(recon, target, &channels)?;
    let [n, _, h, w] = target.shape();
    let plane = h * w;
    let count = (channels.len() * plane) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let r = &recon.sample(i)[channels.start * plane..channels.end * plane];
        let t = &target.sample(i)[channels.start * plane..channels.end * plane];
        let mut acc = 0.0f64;
        for (&a, &b) in r.iter().zip(t) {
            let d = a.as_f64() - b.as_f64();
            acc += d * d;
        }
        out.push(acc / count);
    }
    Ok(out)
}

pub(crate) fn check_loss_shapes<F>(
    recon: &Tensor4<F>,
    target: &Tensor4<F>,
    channels: &Range<usize>,
) -> Result<()> {
    if recon.shape() != target.shape() {
        return Err(Error::shape(
            "loss",
            format!("recon {:?} vs target {:?}", recon.shape(), target.shape()),
        ));
    }
    if channels.start >= channels.end || channels.end > target.channels() {
        return Err(Error::shape(
            "loss",
            format!("channel mask {:?} outside {} channels", channels, target.channels()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_tensors_give_zero() {
        let t = Tensor4::from_vec([2, 1, 1, 3], vec![0.1f32, 0.5, 0.9, 1.0, 0.0, 0.3]).unwrap();
        assert_eq!(per_sample_loss(&t, &t).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn ones_against_zeros() {
        let r = Tensor4::from_vec([3, 2, 2, 2], vec![1.0f32; 24]).unwrap();
        let t = Tensor4::<f32>::zeros([3, 2, 2, 2]);
        assert_eq!(per_sample_loss(&r, &t).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn two_element_sample() {
        let r = Tensor4::from_vec([1, 1, 1, 2], vec![2.0f32, 0.0]).unwrap();
        let t = Tensor4::<f32>::zeros([1, 1, 1, 2]);
        assert_eq!(per_sample_loss(&r, &t).unwrap(), vec![2.0]);
    }

    #[test]
    fn masked_loss_ignores_other_channels() {
        let r = Tensor4::from_vec([1, 2, 1, 1], vec![5.0f64, 1.0]).unwrap();
        let t = Tensor4::<f64>::zeros([1, 2, 1, 1]);
        assert_eq!(per_sample_loss_masked(&r, &t, 1..2).unwrap(), vec![1.0]);
        assert!(per_sample_loss_masked(&r, &t, 1..3).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let r = Tensor4::<f32>::zeros([1, 1, 2, 2]);
        let t = Tensor4::<f32>::zeros([1, 1, 2, 3]);
        assert!(per_sample_loss(&r, &t).is_err());
    }
}
