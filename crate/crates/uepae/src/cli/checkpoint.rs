//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   5 bytes  "UEPAE"
//! version u32      format version (currently 1)
//! seed    u64      training seed
//! config  u32 len + UTF-8 flat key-value text
//! history u32 count + count * (u32 epoch, f64 train_loss, f64 val_loss)
//! banks   u32 count + per bank:
//!           u8  role (0 encoder, 1 first-stage, 2 second-stage)
//!           u32 layer count
//!           per layer: u8 activation, u32 fan_in, u32 fan_out,
//!                      fan_in*fan_out f32 weights (row-major),
//!                      fan_out f32 bias
//! ```
//!
//! Loading refuses any other version and any trailing bytes; a save/load
//! cycle is byte-identical.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::commands::write_atomic;
use super::config_file::ExperimentConfig;
use crate::codec::{CodecModel, EpochRecord, TrainedCodec};
use crate::nn::{Activation, DenseLayer, Mlp};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"UEPAE";
pub const CHECKPOINT_VERSION: u32 = 1;

const ROLE_ENCODER: u8 = 0;
const ROLE_FIRST: u8 = 1;
const ROLE_SECOND: u8 = 2;

pub fn save_checkpoint(path: &Path, trained: &TrainedCodec<f32>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&trained.seed.to_le_bytes());

    let config_text = ExperimentConfig {
        codec: trained.model.config().clone(),
        ..ExperimentConfig::default()
    }
    .to_text();
    buf.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_text.as_bytes());

    buf.extend_from_slice(&(trained.history.len() as u32).to_le_bytes());
    for rec in &trained.history {
        buf.extend_from_slice(&(rec.epoch as u32).to_le_bytes());
        buf.extend_from_slice(&rec.train_loss.to_le_bytes());
        buf.extend_from_slice(&rec.val_loss.to_le_bytes());
    }

    let model = &trained.model;
    let banks: Vec<(u8, &Mlp<f32>)> = model
        .encoders()
        .iter()
        .map(|m| (ROLE_ENCODER, m))
        .chain(model.dec_first().iter().map(|m| (ROLE_FIRST, m)))
        .chain(model.dec_second().iter().map(|m| (ROLE_SECOND, m)))
        .collect();
    buf.extend_from_slice(&(banks.len() as u32).to_le_bytes());
    for (role, mlp) in banks {
        buf.push(role);
        buf.extend_from_slice(&(mlp.layers().len() as u32).to_le_bytes());
        for (layer, act) in mlp.layers().iter().zip(mlp.activations()) {
            buf.push(act.tag());
            buf.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
            buf.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
            for &w in layer.weights().iter() {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for &b in layer.bias().iter() {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
    }

    write_atomic(path, &buf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.data.len() {
            return Err(Error::Checkpoint("unexpected end of file".to_owned()));
        }
        let s = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedCodec<f32>> {
    let data = std::fs::read(path)?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };
    if r.take(5)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint".to_owned()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let seed = r.u64()?;

    let config_len = r.u32()? as usize;
    let config_text = std::str::from_utf8(r.take(config_len)?)
        .map_err(|_| Error::Checkpoint("config block is not UTF-8".to_owned()))?;
    let config = ExperimentConfig::parse(config_text)?.codec;

    let history_len = r.u32()? as usize;
    let mut history = Vec::with_capacity(history_len);
    for _ in 0..history_len {
        history.push(EpochRecord {
            epoch: r.u32()? as usize,
            train_loss: r.f64()?,
            val_loss: r.f64()?,
        });
    }

    let bank_count = r.u32()? as usize;
    if bank_count != config.l() + config.g() + config.b() {
        return Err(Error::Checkpoint(format!(
            "{bank_count} banks for a config needing {}",
            config.l() + config.g() + config.b()
        )));
    }
    let mut encoders = Vec::new();
    let mut dec_first = Vec::new();
    let mut dec_second = Vec::new();
    for _ in 0..bank_count {
        let role = r.u8()?;
        let layer_count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(layer_count);
        let mut activations = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            activations.push(Activation::from_tag(r.u8()?)?);
            let fan_in = r.u32()? as usize;
            let fan_out = r.u32()? as usize;
            let mut weights = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in * fan_out {
                weights.push(r.f32()?);
            }
            let mut bias = Vec::with_capacity(fan_out);
            for _ in 0..fan_out {
                bias.push(r.f32()?);
            }
            let weights = Array2::from_shape_vec((fan_in, fan_out), weights)
                .expect("shape matches data length");
            layers.push(
                DenseLayer::new(weights, Array1::from_vec(bias))
                    .map_err(|e| Error::Checkpoint(e.to_string()))?,
            );
        }
        let mlp =
            Mlp::from_parts(layers, activations).map_err(|e| Error::Checkpoint(e.to_string()))?;
        match role {
            ROLE_ENCODER => encoders.push(mlp),
            ROLE_FIRST => dec_first.push(mlp),
            ROLE_SECOND => dec_second.push(mlp),
            other => return Err(Error::Checkpoint(format!("unknown bank role {other}"))),
        }
    }
    if r.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            data.len() - r.pos
        )));
    }

    let model = CodecModel::from_parts(config, encoders, dec_first, dec_second)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(TrainedCodec {
        model,
        history,
        seed,
    })
}
