use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::stored_len;
use super::{EpochRecord, Layer, LayerSpec, Network, Padding, Tensor4, TrainLog};
use crate::error::{invalid, Error, Result};
use crate::io::*;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DMNN";
pub const CHECKPOINT_VERSION: u16 = 1;

const MAX_SIDE: usize = 4096;
const MAX_LAYERS: usize = 1024;
const MAX_STORED: usize = 1 << 27;
const MAX_RECORDS: usize = 1 << 20;

/// Per-channel input standardization `(x − mean)/std`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    /// Mean and population standard deviation of every channel of an NHWC
    /// tensor. Channels with (near) zero spread get unit scale.
    pub fn from_tensor(x: &Tensor4<f32>) -> Self {
        let c = x.shape[3];
        let count = (x.data.len() / c.max(1)).max(1) as f64;
        let mut mean = vec![0.0; c];
        for px in x.data.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for px in x.data.chunks_exact(c) {
            for ((s, &v), m) in var.iter_mut().zip(px).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        let std = var.iter().map(|s| (s / count).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &mut Tensor4<f32>) -> Result<()> {
        let c = x.shape[3];
        if c != self.mean.len() {
            return invalid(format!("{} standardization channels for a {c}-channel input", self.mean.len()));
        }
        for px in x.data.chunks_exact_mut(c) {
            for ((v, m), s) in px.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        Ok(())
    }
}

/// A trained network with its input statistics and training history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub stats: InputStats,
    pub log: TrainLog,
}

fn layer_kind(spec: &LayerSpec) -> u8 {
    match spec {
        LayerSpec::Conv { .. } => 0,
        LayerSpec::BatchNorm => 1,
        LayerSpec::Relu => 2,
        LayerSpec::FullyConnected { .. } => 3,
        LayerSpec::Dropout { .. } => 4,
        LayerSpec::Softmax => 5,
    }
}

pub fn write_checkpoint<W: Write>(c: &Checkpoint, w: &mut W) -> Result<()> {
    let net = &c.network;
    net.validate()?;
    if c.stats.mean.len() != net.input_shape[2] || c.stats.std.len() != net.input_shape[2] {
        return invalid("standardization statistics do not match the input channels");
    }
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u16(w, CHECKPOINT_VERSION)?;
    for (d, name) in net.input_shape.iter().zip(["height", "width", "channels"]) {
        put_usize(w, *d, name)?;
    }
    put_usize(w, net.layers.len(), "layer count")?;
    for layer in &net.layers {
        let spec = layer.spec();
        put_u8(w, layer_kind(&spec))?;
        match spec {
            LayerSpec::Conv { kernel, filters, padding } => {
                put_usize(w, kernel, "kernel")?;
                put_usize(w, filters, "filters")?;
                put_u8(w, matches!(padding, Padding::Same) as u8)?;
            }
            LayerSpec::FullyConnected { units } => put_usize(w, units, "units")?,
            LayerSpec::Dropout { p } => put_f64(w, p)?,
            _ => {}
        }
    }
    for (m, s) in c.stats.mean.iter().zip(&c.stats.std) {
        put_f64(w, *m)?;
        put_f64(w, *s)?;
    }
    for layer in &net.layers {
        match layer {
            Layer::Conv { weight, bias, .. } | Layer::FullyConnected { weight, bias, .. } => {
                put_f32s(w, weight)?;
                put_f32s(w, bias)?;
            }
            Layer::BatchNorm { gamma, beta, running_mean, running_var } => {
                for v in [gamma, beta, running_mean, running_var] {
                    put_f32s(w, v)?;
                }
            }
            _ => {}
        }
    }
    put_usize(w, c.log.records.len(), "log length")?;
    for r in &c.log.records {
        put_u32(w, r.epoch)?;
        put_f64(w, r.train_loss)?;
        put_f64(w, r.val_loss)?;
        put_f64(w, r.lr)?;
    }
    Ok(())
}

/// Reads one checkpoint; the reader may continue past it.
pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    expect_magic(r, CHECKPOINT_MAGIC)?;
    expect_version(r, CHECKPOINT_VERSION)?;
    let mut input_shape = [0usize; 3];
    for (d, name) in input_shape.iter_mut().zip(["height", "width", "channels"]) {
        *d = get_count(r, name, MAX_SIDE)?;
    }
    let n_layers = get_count(r, "layer count", MAX_LAYERS)?;
    let mut specs = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let spec = match get_u8(r, "layer kind")? {
            0 => {
                let kernel = get_count(r, "kernel", MAX_SIDE)?;
                let filters = get_count(r, "filters", MAX_SIDE)?;
                let padding = match get_u8(r, "padding")? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    p => return Err(Error::Format(format!("layer {i}: unknown padding code {p}"))),
                };
                LayerSpec::Conv { kernel, filters, padding }
            }
            1 => LayerSpec::BatchNorm,
            2 => LayerSpec::Relu,
            3 => LayerSpec::FullyConnected { units: get_count(r, "units", MAX_STORED)? },
            4 => LayerSpec::Dropout { p: get_f64(r, "dropout probability")? },
            5 => LayerSpec::Softmax,
            k => return Err(Error::Format(format!("layer {i}: unknown layer kind {k}"))),
        };
        specs.push(spec);
    }
    let bad = |e: Error| Error::Format(format!("inconsistent layer manifest: {e}"));
    let stored = stored_len(input_shape, &specs).map_err(bad)?;
    if stored > MAX_STORED {
        return Err(Error::Format(format!("{stored} stored parameters exceed limit {MAX_STORED}")));
    }
    let mut stats = InputStats { mean: Vec::new(), std: Vec::new() };
    for _ in 0..input_shape[2] {
        stats.mean.push(get_f64(r, "input mean")?);
        stats.std.push(get_f64(r, "input std")?);
    }
    let mut network: Network<f32> = Network::new(input_shape, &specs, 0).map_err(bad)?;
    for layer in &mut network.layers {
        match layer {
            Layer::Conv { weight, bias, .. } | Layer::FullyConnected { weight, bias, .. } => {
                *weight = get_f32s(r, weight.len(), "weights")?;
                *bias = get_f32s(r, bias.len(), "biases")?;
            }
            Layer::BatchNorm { gamma, beta, running_mean, running_var } => {
                for v in [gamma, beta, running_mean, running_var] {
                    *v = get_f32s(r, v.len(), "normalization parameters")?;
                }
            }
            _ => {}
        }
    }
    network.validate().map_err(bad)?;
    let n_records = get_count(r, "log length", MAX_RECORDS)?;
    let mut log = TrainLog::default();
    for _ in 0..n_records {
        log.records.push(EpochRecord {
            epoch: get_u32(r, "epoch")?,
            train_loss: get_f64(r, "train loss")?,
            val_loss: get_f64(r, "validation loss")?,
            lr: get_f64(r, "learning rate")?,
        });
    }
    Ok(Checkpoint { network, stats, log })
}

pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(c, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let c = read_checkpoint(&mut r)?;
    expect_eof(&mut r)?;
    Ok(c)
}
