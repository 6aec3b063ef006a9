use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use super::adam::AdamState;
use super::layer::{Activation, Layer, LayerTrace};
use super::loss::{check_loss_shapes, per_sample_loss_masked};
use super::real::Real;
use super::tensor::{cnhw_to_nchw, nchw_to_cnhw, Tensor4};
use crate::{Error, Result};

/// Shape parameters of the standard seven-layer autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channels of the first encoder layer; later layers use 2x and 4x.
    pub base_width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            in_channels: crate::CUBE_DEPTH,
            out_channels: crate::CUBE_DEPTH,
            height: crate::CUBE_SIZE,
            width: crate::CUBE_SIZE,
            base_width: 32,
        }
    }
}

impl Architecture {
    /// Cube in, cube out.
    pub fn appearance(depth: usize, base_width: usize) -> Self {
        Architecture {
            in_channels: depth,
            out_channels: depth,
            base_width,
            ..Default::default()
        }
    }

    /// Cube in, two flow components per slice out.
    pub fn motion(depth: usize, base_width: usize) -> Self {
        Architecture {
            in_channels: depth,
            out_channels: 2 * depth,
            base_width,
            ..Default::default()
        }
    }
}

/// Encoder/decoder stack of convolutions and transposed convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<F> {
    layers: Vec<Layer<F>>,
    encoder_len: usize,
    input: [usize; 3],
    output: [usize; 3],
}

/// Activations kept from a forward pass, needed to backpropagate.
#[derive(Debug, Clone)]
pub struct ForwardPass<F> {
    traces: Vec<LayerTrace<F>>,
    output: Tensor4<F>,
}

impl<F> ForwardPass<F> {
    pub fn output(&self) -> &Tensor4<F> {
        &self.output
    }
}

/// Per-layer `(weight, bias)` gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Real> Gradients<F> {
    /// Flattened in the same order as [`Autoencoder::params`].
    pub fn tensors(&self) -> Vec<&[F]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|&g| g == F::zero()))
    }
}

impl<F: Real> Autoencoder<F> {
    /// The seven-layer stack: three stride-2 convolutions, a stride-1
    /// bottleneck and three mirroring stride-2 transposed convolutions.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        let w = arch.base_width;
        if w == 0 || arch.in_channels == 0 || arch.out_channels == 0 {
            return Err(Error::invalid("architecture widths must be positive"));
        }
        if arch.height % 8 != 0 || arch.width % 8 != 0 || arch.height == 0 || arch.width == 0 {
            return Err(Error::invalid(format!(
                "input {}x{} must be a positive multiple of 8",
                arch.height, arch.width
            )));
        }
        let leaky = Activation::LeakyRelu;
        let encoder = vec![
            Layer::conv(arch.in_channels, w, 3, 2, 1, leaky),
            Layer::conv(w, 2 * w, 3, 2, 1, leaky),
            Layer::conv(2 * w, 4 * w, 3, 2, 1, leaky),
            Layer::conv(4 * w, 4 * w, 3, 1, 1, leaky),
        ];
        let decoder = vec![
            Layer::deconv(4 * w, 2 * w, 3, 2, 1, 1, leaky),
            Layer::deconv(2 * w, w, 3, 2, 1, 1, leaky),
            Layer::deconv(w, arch.out_channels, 3, 2, 1, 1, Activation::Linear),
        ];
        let mut model =
            Self::from_layers(encoder, decoder, [arch.in_channels, arch.height, arch.width])?;
        for layer in &mut model.layers {
            layer.init_uniform(rng);
        }
        Ok(model)
    }

    /// Assembles an arbitrary stack, checking that shapes chain for `input`
    /// (`[channels, height, width]`).
    pub fn from_layers(
        encoder: Vec<Layer<F>>,
        decoder: Vec<Layer<F>>,
        input: [usize; 3],
    ) -> Result<Self> {
        let encoder_len = encoder.len();
        let layers: Vec<Layer<F>> = encoder.into_iter().chain(decoder).collect();
        if layers.is_empty() {
            return Err(Error::Empty("autoencoder layers"));
        }
        let [mut c, mut h, mut w] = input;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_channels() != c {
                return Err(Error::shape(
                    format!("layer {} ({:?})", i, layer.kind()),
                    format!("expects {} input channels, previous yields {}", layer.in_channels(), c),
                ));
            }
            let (nh, nw) = layer.output_dims(h, w).ok_or_else(|| {
                Error::shape(
                    format!("layer {} ({:?})", i, layer.kind()),
                    format!("cannot take {}x{} input", h, w),
                )
            })?;
            c = layer.out_channels();
            h = nh;
            w = nw;
        }
        Ok(Autoencoder {
            layers,
            encoder_len,
            input,
            output: [c, h, w],
        })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn encoder_len(&self) -> usize {
        self.encoder_len
    }

    /// `[channels, height, width]` accepted per sample.
    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameter tensors: weight then bias for each layer.
    pub fn params(&self) -> Vec<&[F]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight(), l.bias()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [F]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                // Split borrow of one layer into its two buffers.
                let (w, b) = l.split_params_mut();
                [w, b]
            })
            .collect()
    }

    fn check_input(&self, batch: &Tensor4<F>) -> Result<()> {
        let [_, c, h, w] = batch.shape();
        if [c, h, w] != self.input {
            return Err(Error::shape(
                format!("layer 0 ({:?})", self.layers[0].kind()),
                format!("model takes {:?} per sample, batch has {:?}", self.input, [c, h, w]),
            ));
        }
        Ok(())
    }

    /// Reconstruction `f_d(f_e(x))` of a batch.
    pub fn forward(&self, batch: &Tensor4<F>) -> Result<Tensor4<F>> {
        Ok(self.forward_pass(batch)?.output)
    }

    /// Forward pass that keeps what [`Autoencoder::gradients`] needs.
    pub fn forward_pass(&self, batch: &Tensor4<F>) -> Result<ForwardPass<F>> {
        self.check_input(batch)?;
        let n = batch.batch();
        let [c0, h0, w0] = self.input;
        let mut x = nchw_to_cnhw(batch.data(), n, c0, h0 * w0);
        let mut dims = (h0, w0);
        let mut traces = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let trace = layer.forward(&x, n, dims).map_err(|e| match e {
                Error::Shape { detail, .. } => {
                    Error::shape(format!("layer {} ({:?})", i, layer.kind()), detail)
                }
                other => other,
            })?;
            dims = layer.output_dims(dims.0, dims.1).expect("validated at construction");
            if i + 1 < self.layers.len() {
                x = trace.output.clone();
            }
            traces.push(trace);
        }
        let [oc, oh, ow] = self.output;
        let last = &traces.last().expect("non-empty").output;
        let out = cnhw_to_nchw(last, n, oc, oh * ow);
        Ok(ForwardPass {
            traces,
            output: Tensor4::from_vec([n, oc, oh, ow], out)?,
        })
    }

    /// Gradient of `sum_i weights[i] * L_i` where `L_i` is the mean squared
    /// error of sample `i` over `channels`.
    pub fn gradients(
        &self,
        pass: &ForwardPass<F>,
        targets: &Tensor4<F>,
        weights: &[f64],
        channels: Range<usize>,
    ) -> Result<Gradients<F>> {
        let out = &pass.output;
        check_loss_shapes(out, targets, &channels)?;
        let n = out.batch();
        if weights.len() != n {
            return Err(Error::shape(
                "weights",
                format!("{} weights for batch of {}", weights.len(), n),
            ));
        }
        let [oc, oh, ow] = self.output;
        let plane = oh * ow;
        let count = (channels.len() * plane) as f64;
        let mut dout = vec![F::zero(); out.data().len()];
        for (i, &v) in weights.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let scale = F::of(2.0 * v / count);
            let base = i * oc * plane;
            let range = base + channels.start * plane..base + channels.end * plane;
            for j in range {
                dout[j] = scale * (out.data()[j] - targets.data()[j]);
            }
        }
        let mut dy = nchw_to_cnhw(&dout, n, oc, plane);
        let mut layers: Vec<(Vec<F>, Vec<F>)> = self
            .layers
            .iter()
            .map(|l| (vec![F::zero(); l.weight().len()], vec![F::zero(); l.bias().len()]))
            .collect();
        for i in (0..self.layers.len()).rev() {
            let (dw, db) = &mut layers[i];
            match self.layers[i].backward(&pass.traces[i], dy, dw, db, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        Ok(Gradients { layers })
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(bad) = weights.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("sample weight {} outside [0, 1]", bad)));
    }
    Ok(())
}

/// One weighted Adam step on an existing forward pass.
///
/// Returns the batch mean of `weights[i] * L_i`. Samples with zero weight
/// contribute nothing to the gradient; a batch with every weight zero only
/// advances the optimizer's step counter.
pub fn apply_weighted_step<F: Real>(
    model: &mut Autoencoder<F>,
    optimizer: &mut AdamState<F>,
    pass: &ForwardPass<F>,
    targets: &Tensor4<F>,
    weights: &[f64],
    channels: Range<usize>,
) -> Result<f64> {
    check_weights(weights)?;
    let losses = per_sample_loss_masked(&pass.output, targets, channels.clone())?;
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Diverged);
    }
    let n = losses.len().max(1) as f64;
    let mean = losses.iter().zip(weights).map(|(l, v)| l * v).sum::<f64>() / n;
    if weights.iter().all(|&v| v == 0.0) {
        optimizer.skip();
        return Ok(mean);
    }
    let grads = model.gradients(pass, targets, weights, channels)?;
    optimizer.update(model, &grads)?;
    Ok(mean)
}

/// Forward, weighted backward and one optimizer update over all channels.
pub fn weighted_backward_step<F: Real>(
    model: &mut Autoencoder<F>,
    optimizer: &mut AdamState<F>,
    batch: &Tensor4<F>,
    targets: &Tensor4<F>,
    weights: &[f64],
) -> Result<f64> {
    let pass = model.forward_pass(batch)?;
    let channels = 0..targets.channels();
    apply_weighted_step(model, optimizer, &pass, targets, weights, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(shape: [usize; 4], seed: u64) -> Tensor4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor4::from_vec(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    /// Independent spatial-shape inference by the textbook formulas.
    fn infer_shape(input: [usize; 3], layers: &[Layer<f32>]) -> [usize; 3] {
        let [mut c, mut h, mut w] = input;
        for l in layers {
            let (k, s, p, op) = (l.kernel(), l.stride(), l.padding(), l.output_padding());
            match l.kind() {
                crate::nn::LayerKind::Conv => {
                    h = (h + 2 * p - k) / s + 1;
                    w = (w + 2 * p - k) / s + 1;
                }
                crate::nn::LayerKind::Deconv => {
                    h = (h - 1) * s - 2 * p + k + op;
                    w = (w - 1) * s - 2 * p + k + op;
                }
            }
            c = l.out_channels();
        }
        [c, h, w]
    }

    #[test]
    fn standard_architecture_restores_input_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Autoencoder::<f32>::new(&Architecture::appearance(5, 4), &mut rng).unwrap();
        assert_eq!(model.layers().len(), 7);
        assert_eq!(model.output_shape(), [5, 32, 32]);
        let motion = Autoencoder::<f32>::new(&Architecture::motion(5, 4), &mut rng).unwrap();
        assert_eq!(motion.output_shape(), [10, 32, 32]);
    }

    #[test]
    fn zero_final_layer_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = Autoencoder::<f32>::new(&Architecture::appearance(5, 4), &mut rng).unwrap();
        let last = model.layers_mut().last_mut().unwrap();
        last.weight_mut().iter_mut().for_each(|w| *w = 0.0);
        last.bias_mut().iter_mut().for_each(|b| *b = 0.0);
        let out = model.forward(&random_batch([2, 5, 32, 32], 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_one_by_one_conv_is_identity() {
        let mut l = Layer::<f32>::conv(1, 1, 1, 1, 0, Activation::Linear);
        l.weight_mut()[0] = 1.0;
        let model = Autoencoder::from_layers(vec![l], vec![], [1, 32, 32]).unwrap();
        let x = random_batch([2, 1, 32, 32], 4);
        assert_eq!(model.forward(&x).unwrap(), x);
    }

    #[test]
    fn two_layer_model_shape_matches_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut enc = Layer::<f32>::conv(5, 8, 3, 2, 1, Activation::LeakyRelu);
        let mut dec = Layer::<f32>::deconv(8, 5, 3, 2, 1, 1, Activation::Linear);
        enc.init_uniform(&mut rng);
        dec.init_uniform(&mut rng);
        let layers = vec![enc.clone(), dec.clone()];
        let model = Autoencoder::from_layers(vec![enc], vec![dec], [5, 32, 32]).unwrap();
        let out = model.forward(&random_batch([3, 5, 32, 32], 6)).unwrap();
        let [c, h, w] = infer_shape([5, 32, 32], &layers);
        assert_eq!(out.shape(), [3, c, h, w]);
        assert_eq!(out.shape(), [3, 5, 32, 32]);
    }

    #[test]
    fn mismatched_layers_name_the_offender() {
        let a = Layer::<f32>::conv(5, 8, 3, 2, 1, Activation::LeakyRelu);
        let b = Layer::<f32>::deconv(4, 5, 3, 2, 1, 1, Activation::Linear);
        match Autoencoder::from_layers(vec![a], vec![b], [5, 32, 32]) {
            Err(Error::Shape { at, .. }) => assert!(at.starts_with("layer 1"), "{at}"),
            other => panic!("unexpected {:?}", other),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = Autoencoder::<f32>::new(&Architecture::appearance(5, 4), &mut rng).unwrap();
        match model.forward(&random_batch([1, 4, 32, 32], 1)) {
            Err(Error::Shape { at, .. }) => assert!(at.starts_with("layer 0"), "{at}"),
            other => panic!("unexpected {:?}", other),
        }
    }

    fn small_setup(seed: u64) -> (Autoencoder<f32>, Tensor4<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture {
            in_channels: 2,
            out_channels: 2,
            height: 8,
            width: 8,
            base_width: 2,
        };
        let model = Autoencoder::<f32>::new(&arch, &mut rng).unwrap();
        (model, random_batch([2, 2, 8, 8], seed + 100))
    }

    #[test]
    fn zero_weights_leave_parameters_untouched() {
        let (mut model, x) = small_setup(8);
        let before = model.clone();
        let mut opt = AdamState::new(AdamConfig::default(), &model);
        weighted_backward_step(&mut model, &mut opt, &x, &x, &[0.0, 0.0]).unwrap();
        assert_eq!(model, before);
        assert_eq!(opt.step(), 1);
    }

    #[test]
    fn unit_weights_equal_plain_objective_step() {
        let (model0, x) = small_setup(9);
        let mut a = model0.clone();
        let mut oa = AdamState::new(AdamConfig::default(), &a);
        weighted_backward_step(&mut a, &mut oa, &x, &x, &[1.0, 1.0]).unwrap();

        // Plain objective: gradient of sum_i L_i written out directly.
        let mut b = model0.clone();
        let mut ob = AdamState::new(AdamConfig::default(), &b);
        let pass = b.forward_pass(&x).unwrap();
        let g = b.gradients(&pass, &x, &[1.0, 1.0], 0..2).unwrap();
        ob.update(&mut b, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weighted_sample_matches_excluded_sample() {
        let (model, x) = small_setup(10);
        let pass = model.forward_pass(&x).unwrap();
        let g_pair = model.gradients(&pass, &x, &[1.0, 0.0], 0..2).unwrap();
        let first = Tensor4::from_vec([1, 2, 8, 8], x.sample(0).to_vec()).unwrap();
        let pass1 = model.forward_pass(&first).unwrap();
        let g_one = model.gradients(&pass1, &first, &[1.0], 0..2).unwrap();
        for (a, b) in g_pair.tensors().iter().zip(g_one.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() as f64 <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn weights_outside_unit_interval_rejected() {
        let (mut model, x) = small_setup(11);
        let mut opt = AdamState::new(AdamConfig::default(), &model);
        assert!(weighted_backward_step(&mut model, &mut opt, &x, &x, &[1.5, 0.0]).is_err());
        assert!(weighted_backward_step(&mut model, &mut opt, &x, &x, &[1.0]).is_err());
    }
}
