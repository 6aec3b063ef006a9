use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense `(batch, channels, height, width)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<F> {
    data: Vec<F>,
    shape: [usize; 4],
}

impl<F: Copy + Default> Tensor4<F> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 {
            data: vec![F::default(); shape.iter().product()],
            shape,
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<F>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, want, data.len()),
            ));
        }
        Ok(Tensor4 { data, shape })
    }

    /// Stacks equally sized samples into a batch.
    pub fn stack<'a, I>(chw: [usize; 3], samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [F]>,
        F: 'a,
    {
        let per: usize = chw.iter().product();
        let mut data = Vec::new();
        let mut n = 0;
        for s in samples {
            if s.len() != per {
                return Err(Error::shape(
                    "stack",
                    format!("sample {} has {} values, expected {}", n, s.len(), per),
                ));
            }
            data.extend_from_slice(s);
            n += 1;
        }
        Ok(Tensor4 {
            data,
            shape: [n, chw[0], chw[1], chw[2]],
        })
    }
}

impl<F> Tensor4<F> {
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, i: usize) -> &[F] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [F] {
        let n = self.sample_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }
}

/// `(N, C, S)` -> `(C, N, S)` where `S` is the spatial size.
pub(crate) fn nchw_to_cnhw<F: Copy>(src: &[F], n: usize, c: usize, s: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(src.len());
    for ci in 0..c {
        for ni in 0..n {
            let off = (ni * c + ci) * s;
            out.extend_from_slice(&src[off..off + s]);
        }
    }
    out
}

/// `(C, N, S)` -> `(N, C, S)`.
pub(crate) fn cnhw_to_nchw<F: Copy>(src: &[F], n: usize, c: usize, s: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(src.len());
    for ni in 0..n {
        for ci in 0..c {
            let off = (ci * n + ni) * s;
            out.extend_from_slice(&src[off..off + s]);
        }
    }
    out
}
