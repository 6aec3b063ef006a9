use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::real::{matmul, Real};
use crate::{Error, Result};

/// Negative-side slope of the leaky rectifier on hidden layers.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    /// Transposed convolution.
    Deconv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    LeakyRelu,
}

/// A square-kernel convolution or transposed convolution with bias.
///
/// Weights are stored `(out, in, k, k)` for [`LayerKind::Conv`] and
/// `(in, out, k, k)` for [`LayerKind::Deconv`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    kind: LayerKind,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
    activation: Activation,
    weight: Vec<F>,
    bias: Vec<F>,
}

/// Sliding-window correspondence between a "big" grid and a "small" grid:
/// `big[s * small + k - p]` for kernel tap `k`.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    batch: usize,
    big: (usize, usize),
    small: (usize, usize),
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.batch * self.small.0 * self.small.1
    }

    /// Small-grid indices `o < small` whose tap `k` lands inside a big axis
    /// of length `big`, i.e. `0 <= o * stride + k - padding < big`.
    fn valid(&self, k: usize, small: usize, big: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.padding { 0 } else { (self.padding - k).div_ceil(s) };
        let hi = if big + self.padding > k {
            ((big + self.padding - k - 1) / s + 1).min(small)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Gathers big-grid values into a `(C k k) x (N Hs Ws)` matrix.
    fn im2col<F: Real>(&self, big: &[F]) -> Vec<F> {
        let (bh, bw) = self.big;
        let (sh, sw) = self.small;
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let ncols = self.cols();
        let mut cols = vec![F::zero(); self.rows() * ncols];
        for c in 0..self.channels {
            for ky in 0..k {
                let (oy0, oy1) = self.valid(ky, sh, bh);
                for kx in 0..k {
                    let (ox0, ox1) = self.valid(kx, sw, bw);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let ix0 = ox0 * s + kx - p;
                    let row = ((c * k + ky) * k + kx) * ncols;
                    for n in 0..self.batch {
                        let plane = (c * self.batch + n) * bh * bw;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let src = &big[plane + iy * bw + ix0..];
                            let dst = &mut cols[row + (n * sh + oy) * sw + ox0..row + (n * sh + oy) * sw + ox1];
                            if s == 1 {
                                dst.copy_from_slice(&src[..dst.len()]);
                            } else {
                                for (d, v) in dst.iter_mut().zip(src.iter().step_by(s)) {
                                    *d = *v;
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Geometry::im2col`]: scatter-adds columns onto the big grid.
    fn col2im<F: Real>(&self, cols: &[F], big: &mut [F]) {
        let (bh, bw) = self.big;
        let (sh, sw) = self.small;
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let ncols = self.cols();
        for c in 0..self.channels {
            for ky in 0..k {
                let (oy0, oy1) = self.valid(ky, sh, bh);
                for kx in 0..k {
                    let (ox0, ox1) = self.valid(kx, sw, bw);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let ix0 = ox0 * s + kx - p;
                    let row = ((c * k + ky) * k + kx) * ncols;
                    for n in 0..self.batch {
                        let plane = (c * self.batch + n) * bh * bw;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let src = &cols[row + (n * sh + oy) * sw + ox0..row + (n * sh + oy) * sw + ox1];
                            let dst = &mut big[plane + iy * bw + ix0..];
                            for (d, v) in dst.iter_mut().step_by(s).zip(src) {
                                *d += *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace<F> {
    /// im2col matrix for convolutions, the raw input for deconvolutions.
    saved: Vec<F>,
    pub(crate) output: Vec<F>,
    batch: usize,
    in_dims: (usize, usize),
    out_dims: (usize, usize),
}

impl<F: Real> Layer<F> {
    /// Zero-initialized convolution.
    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    ) -> Self {
        Self::zeroed(
            LayerKind::Conv,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            0,
            activation,
        )
    }

    /// Zero-initialized transposed convolution.
    pub fn deconv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        activation: Activation,
    ) -> Self {
        Self::zeroed(
            LayerKind::Deconv,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
            activation,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn zeroed(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        activation: Activation,
    ) -> Self {
        Layer {
            kind,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
            activation,
            weight: vec![F::zero(); in_channels * out_channels * kernel * kernel],
            bias: vec![F::zero(); out_channels],
        }
    }

    /// Uniform initialization in `±sqrt(1 / fan_in)` with `fan_in = in * k * k`.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = (self.in_channels * self.kernel * self.kernel).max(1) as f64;
        let bound = num_traits::Float::sqrt(1.0 / fan_in);
        for w in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *w = F::of(rng.gen_range(-bound..=bound));
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn output_padding(&self) -> usize {
        self.output_padding
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &[F] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [F] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [F] {
        &mut self.bias
    }

    pub(crate) fn split_params_mut(&mut self) -> (&mut [F], &mut [F]) {
        (&mut self.weight, &mut self.bias)
    }

    /// Weight tensor shape in storage order.
    pub fn weight_shape(&self) -> [usize; 4] {
        match self.kind {
            LayerKind::Conv => [self.out_channels, self.in_channels, self.kernel, self.kernel],
            LayerKind::Deconv => [self.in_channels, self.out_channels, self.kernel, self.kernel],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Spatial output size for a given input size, if the layer accepts it.
    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 {
            return None;
        }
        let one = |d: usize| -> Option<usize> {
            match self.kind {
                LayerKind::Conv => {
                    let padded = d + 2 * self.padding;
                    if padded < self.kernel {
                        None
                    } else {
                        Some((padded - self.kernel) / self.stride + 1)
                    }
                }
                LayerKind::Deconv => {
                    if d == 0 {
                        return None;
                    }
                    ((d - 1) * self.stride + self.kernel + self.output_padding)
                        .checked_sub(2 * self.padding)
                        .filter(|&o| o > 0)
                }
            }
        };
        Some((one(h)?, one(w)?))
    }

    fn geometry(&self, batch: usize, in_dims: (usize, usize), out_dims: (usize, usize)) -> Geometry {
        let (channels, big, small) = match self.kind {
            LayerKind::Conv => (self.in_channels, in_dims, out_dims),
            LayerKind::Deconv => (self.out_channels, out_dims, in_dims),
        };
        Geometry {
            channels,
            batch,
            big,
            small,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }

    /// Forward over a channel-major `(C, N, H, W)` buffer.
    pub(crate) fn forward(
        &self,
        x: &[F],
        batch: usize,
        in_dims: (usize, usize),
    ) -> Result<LayerTrace<F>> {
        let out_dims = self.output_dims(in_dims.0, in_dims.1).ok_or_else(|| {
            Error::shape(
                "layer",
                format!("{:?} cannot take {}x{} input", self.kind, in_dims.0, in_dims.1),
            )
        })?;
        let in_plane = batch * in_dims.0 * in_dims.1;
        if x.len() != self.in_channels * in_plane {
            return Err(Error::shape(
                "layer",
                format!(
                    "expected {} input channels, got buffer of {} values",
                    self.in_channels,
                    x.len()
                ),
            ));
        }
        let out_plane = batch * out_dims.0 * out_dims.1;
        let geo = self.geometry(batch, in_dims, out_dims);
        let kk = self.kernel * self.kernel;
        let mut out = vec![F::zero(); self.out_channels * out_plane];
        let saved = match self.kind {
            LayerKind::Conv => {
                let cols = geo.im2col(x);
                matmul(
                    self.out_channels,
                    self.in_channels * kk,
                    out_plane,
                    &self.weight,
                    false,
                    &cols,
                    false,
                    &mut out,
                    false,
                );
                cols
            }
            LayerKind::Deconv => {
                let mut cols = vec![F::zero(); self.out_channels * kk * in_plane];
                matmul(
                    self.out_channels * kk,
                    self.in_channels,
                    in_plane,
                    &self.weight,
                    true,
                    x,
                    false,
                    &mut cols,
                    false,
                );
                geo.col2im(&cols, &mut out);
                x.to_vec()
            }
        };
        for (c, plane) in out.chunks_exact_mut(out_plane).enumerate() {
            let b = self.bias[c];
            for v in plane.iter_mut() {
                *v += b;
            }
        }
        if self.activation == Activation::LeakyRelu {
            let slope = F::of(LEAKY_SLOPE);
            for v in out.iter_mut() {
                if *v < F::zero() {
                    *v *= slope;
                }
            }
        }
        Ok(LayerTrace {
            saved,
            output: out,
            batch,
            in_dims,
            out_dims,
        })
    }

    /// Backpropagates `dy` (gradient w.r.t. this layer's activated output).
    ///
    /// Writes parameter gradients into `dw`/`db` and returns the input
    /// gradient when `need_dx` is set.
    pub(crate) fn backward(
        &self,
        trace: &LayerTrace<F>,
        mut dy: Vec<F>,
        dw: &mut [F],
        db: &mut [F],
        need_dx: bool,
    ) -> Option<Vec<F>> {
        if self.activation == Activation::LeakyRelu {
            let slope = F::of(LEAKY_SLOPE);
            for (g, &o) in dy.iter_mut().zip(&trace.output) {
                if o <= F::zero() {
                    *g *= slope;
                }
            }
        }
        let batch = trace.batch;
        let in_plane = batch * trace.in_dims.0 * trace.in_dims.1;
        let out_plane = batch * trace.out_dims.0 * trace.out_dims.1;
        for (c, plane) in dy.chunks_exact(out_plane).enumerate() {
            let mut s = F::zero();
            for &g in plane {
                s += g;
            }
            db[c] = s;
        }
        let geo = self.geometry(batch, trace.in_dims, trace.out_dims);
        let kk = self.kernel * self.kernel;
        match self.kind {
            LayerKind::Conv => {
                let kdim = self.in_channels * kk;
                matmul(
                    self.out_channels,
                    out_plane,
                    kdim,
                    &dy,
                    false,
                    &trace.saved,
                    true,
                    dw,
                    false,
                );
                if !need_dx {
                    return None;
                }
                let mut dcols = vec![F::zero(); kdim * out_plane];
                matmul(
                    kdim,
                    self.out_channels,
                    out_plane,
                    &self.weight,
                    true,
                    &dy,
                    false,
                    &mut dcols,
                    false,
                );
                let mut dx = vec![F::zero(); self.in_channels * in_plane];
                geo.col2im(&dcols, &mut dx);
                Some(dx)
            }
            LayerKind::Deconv => {
                let dcols = geo.im2col(&dy);
                let kdim = self.out_channels * kk;
                matmul(
                    self.in_channels,
                    in_plane,
                    kdim,
                    &trace.saved,
                    false,
                    &dcols,
                    true,
                    dw,
                    false,
                );
                if !need_dx {
                    return None;
                }
                let mut dx = vec![F::zero(); self.in_channels * in_plane];
                matmul(
                    self.in_channels,
                    kdim,
                    in_plane,
                    &self.weight,
                    false,
                    &dcols,
                    false,
                    &mut dx,
                    false,
                );
                Some(dx)
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dims_follow_stride_two_pairs() {
        let c = Layer::<f32>::conv(1, 1, 3, 2, 1, Activation::Linear);
        assert_eq!(c.output_dims(32, 32), Some((16, 16)));
        assert_eq!(c.output_dims(5, 7), Some((3, 4)));
        let d = Layer::<f32>::deconv(1, 1, 3, 2, 1, 1, Activation::Linear);
        assert_eq!(d.output_dims(4, 4), Some((8, 8)));
        assert_eq!(d.output_dims(16, 16), Some((32, 32)));
        let b = Layer::<f32>::conv(1, 1, 3, 1, 1, Activation::Linear);
        assert_eq!(b.output_dims(4, 4), Some((4, 4)));
        assert_eq!(Layer::<f32>::conv(1, 1, 5, 1, 0, Activation::Linear).output_dims(3, 3), None);
    }

    #[test]
    fn conv_matches_direct_sum() {
        // 1 input channel 4x4, 2 output channels, stride 2, pad 1.
        let mut l = Layer::<f64>::conv(1, 2, 3, 2, 1, Activation::Linear);
        for (i, w) in l.weight_mut().iter_mut().enumerate() {
            *w = (i as f64) * 0.1 - 0.5;
        }
        l.bias_mut()[1] = 0.25;
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let tr = l.forward(&x, 1, (4, 4)).unwrap();
        for co in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut s = l.bias()[co];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if (0..4).contains(&iy) && (0..4).contains(&ix) {
                                s += l.weight()[co * 9 + ky * 3 + kx] * x[(iy * 4 + ix) as usize];
                            }
                        }
                    }
                    let got = tr.output[co * 4 + oy * 2 + ox];
                    assert!((got - s).abs() < 1e-12, "{got} vs {s}");
                }
            }
        }
    }

    #[test]
    fn deconv_matches_scatter_definition() {
        let mut l = Layer::<f64>::deconv(2, 1, 3, 2, 1, 1, Activation::Linear);
        for (i, w) in l.weight_mut().iter_mut().enumerate() {
            *w = ((i * 7) % 5) as f64 - 2.0;
        }
        let x: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect(); // 2 ch x 2x2
        let tr = l.forward(&x, 1, (2, 2)).unwrap();
        let mut want = [0.0f64; 16];
        for ci in 0..2 {
            for iy in 0..2 {
                for ix in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let oy = (iy * 2 + ky) as isize - 1;
                            let ox = (ix * 2 + kx) as isize - 1;
                            if (0..4).contains(&oy) && (0..4).contains(&ox) {
                                want[(oy * 4 + ox) as usize] +=
                                    x[ci * 4 + iy * 2 + ix] * l.weight()[ci * 9 + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(tr.output.len(), 16);
        for (g, w) in tr.output.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn leaky_rectifier_scales_negatives() {
        let mut l = Layer::<f64>::conv(1, 1, 1, 1, 0, Activation::LeakyRelu);
        l.weight_mut()[0] = 1.0;
        let tr = l.forward(&[-1.0, 2.0], 1, (1, 2)).unwrap();
        assert_eq!(tr.output, vec![-0.2, 2.0]);
    }
}
