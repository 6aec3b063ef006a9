//! Model checkpoints: `SPRCKPT1`, the per-sample input shape, the layer
//! count and encoder length, then one record per layer (kind tag, seven
//! shape/hyper-parameter integers, weights, biases), then the optimizer (tag,
//! step, hyper-parameters, first and second moments per parameter tensor).
//! Integers are `u32`, optimizer hyper-parameters `f64` and all other values
//! `f32`, little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use spr_core::nn::{Activation, AdamConfig, AdamState, Autoencoder, Layer, LayerKind};

use crate::binio::{expect_magic, get_f32s, get_f64s, get_u32, put_f32s, put_f64s, put_u32};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPRCKPT1";

const TAG_CONV: usize = 1;
const TAG_DECONV: usize = 2;
const TAG_ADAM: usize = 3;

fn activation_code(a: Activation) -> usize {
    match a {
        Activation::Linear => 0,
        Activation::LeakyRelu => 1,
    }
}

pub fn write_checkpoint(path: &Path, model: &Autoencoder<f32>, optimizer: &AdamState<f32>) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    write_to(&mut w, model, optimizer)
        .and_then(|_| w.flush())
        .map_err(Error::io(path))
}

fn write_to(w: &mut impl Write, model: &Autoencoder<f32>, opt: &AdamState<f32>) -> io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for x in model.input_shape() {
        put_u32(w, x)?;
    }
    put_u32(w, model.layers().len())?;
    put_u32(w, model.encoder_len())?;
    for l in model.layers() {
        let tag = match l.kind() {
            LayerKind::Conv => TAG_CONV,
            LayerKind::Deconv => TAG_DECONV,
        };
        for x in [
            tag,
            l.in_channels(),
            l.out_channels(),
            l.kernel(),
            l.stride(),
            l.padding(),
            l.output_padding(),
            activation_code(l.activation()),
        ] {
            put_u32(w, x)?;
        }
        put_f32s(w, l.weight())?;
        put_f32s(w, l.bias())?;
    }
    put_u32(w, TAG_ADAM)?;
    let step = opt.step();
    put_u32(w, (step & 0xFFFF_FFFF) as usize)?;
    put_u32(w, (step >> 32) as usize)?;
    let c = opt.config();
    put_f64s(w, &[c.learning_rate, c.beta1, c.beta2, c.epsilon, c.weight_decay])?;
    for (m, v) in opt.first_moments().iter().zip(opt.second_moments()) {
        put_f32s(w, m)?;
        put_f32s(w, v)?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(Autoencoder<f32>, AdamState<f32>)> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    if !expect_magic(&mut r, CHECKPOINT_MAGIC).map_err(Error::io(path))? {
        return Err(Error::format(path, "not a checkpoint file"));
    }
    read_from(&mut r, path)
}

fn read_from(r: &mut impl Read, path: &Path) -> Result<(Autoencoder<f32>, AdamState<f32>)> {
    let io = |e| Error::io(path)(e);
    let mut input = [0usize; 3];
    for x in input.iter_mut() {
        *x = get_u32(r).map_err(io)?;
    }
    let n_layers = get_u32(r).map_err(io)?;
    let encoder_len = get_u32(r).map_err(io)?;
    if encoder_len > n_layers {
        return Err(Error::format(path, "encoder longer than the network"));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let mut h = [0usize; 8];
        for x in h.iter_mut() {
            *x = get_u32(r).map_err(io)?;
        }
        let [tag, cin, cout, k, stride, pad, out_pad, act] = h;
        let activation = match act {
            0 => Activation::Linear,
            1 => Activation::LeakyRelu,
            _ => return Err(Error::format(path, format!("layer {}: unknown activation {}", i, act))),
        };
        let mut layer = match tag {
            TAG_CONV => Layer::conv(cin, cout, k, stride, pad, activation),
            TAG_DECONV => Layer::deconv(cin, cout, k, stride, pad, out_pad, activation),
            _ => return Err(Error::format(path, format!("layer {}: unknown kind tag {}", i, tag))),
        };
        let wn = layer.weight().len();
        layer.weight_mut().copy_from_slice(&get_f32s(r, wn).map_err(io)?);
        let bn = layer.bias().len();
        layer.bias_mut().copy_from_slice(&get_f32s(r, bn).map_err(io)?);
        layers.push(layer);
    }
    let decoder = layers.split_off(encoder_len);
    let model = Autoencoder::from_layers(layers, decoder, input)?;

    if get_u32(r).map_err(io)? != TAG_ADAM {
        return Err(Error::format(path, "missing optimizer record"));
    }
    let lo = get_u32(r).map_err(io)? as u64;
    let hi = get_u32(r).map_err(io)? as u64;
    let hp = get_f64s(r, 5).map_err(io)?;
    let config = AdamConfig {
        learning_rate: hp[0],
        beta1: hp[1],
        beta2: hp[2],
        epsilon: hp[3],
        weight_decay: hp[4],
    };
    let mut m = Vec::new();
    let mut v = Vec::new();
    for p in model.params() {
        m.push(get_f32s(r, p.len()).map_err(io)?);
        v.push(get_f32s(r, p.len()).map_err(io)?);
    }
    let opt = AdamState::from_parts(config, lo | (hi << 32), m, v, &model)?;
    Ok((model, opt))
}
