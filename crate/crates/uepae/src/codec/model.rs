//! Parameter banks for the structured codec.

use ndarray::Array1;

use crate::channel::{mix_seed, streams};
use crate::codec::{pipeline, CodecConfig, MessageBatch};
use crate::nn::{Activation, Mlp, Scalar};
use crate::{Error, Result};

/// The `L` encoder subblocks plus the two-stage decoder bank.
///
/// Encoder `l`: `2^K -> 2^K (hidden) -> n (linear bottleneck)`.
/// First-stage decoder `i`: `n -> 2^K -> 2^K (softmax)`.
/// Second-stage decoder `j`: `(n + 2^K) -> 2^K -> 2^K (softmax)`, its input
/// being the channel output concatenated with the summed first-stage
/// softmax outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecModel<T: Scalar> {
    config: CodecConfig,
    encoders: Vec<Mlp<T>>,
    dec_first: Vec<Mlp<T>>,
    dec_second: Vec<Mlp<T>>,
}

impl<T: Scalar> CodecModel<T> {
    /// Fresh banks with Glorot-initialized weights, deterministic in
    /// `config.seed`.
    pub fn init(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let (m, n) = (config.m(), config.n);
        let hid = config.hidden_activation;
        let mut slot = 0u64;
        let mut next_slot = || {
            let s = slot;
            slot += 1;
            s
        };
        let encoders = (0..config.l())
            .map(|_| init_encoder(&config, next_slot()))
            .collect::<Result<Vec<_>>>()?;
        let dec_first = (0..config.g())
            .map(|_| {
                Mlp::init(
                    &[n, m, m],
                    &[hid, Activation::Softmax],
                    mix_seed(config.seed, streams::INIT_BASE + next_slot()),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let dec_second = (0..config.b())
            .map(|_| {
                Mlp::init(
                    &[n + m, m, m],
                    &[hid, Activation::Softmax],
                    mix_seed(config.seed, streams::INIT_BASE + next_slot()),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            encoders,
            dec_first,
            dec_second,
        })
    }

    /// Rebuilds a model from existing banks (checkpoint loading); shapes
    /// must match the configuration.
    pub fn from_parts(
        config: CodecConfig,
        encoders: Vec<Mlp<T>>,
        dec_first: Vec<Mlp<T>>,
        dec_second: Vec<Mlp<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let (m, n) = (config.m(), config.n);
        if encoders.len() != config.l()
            || dec_first.len() != config.g()
            || dec_second.len() != config.b()
        {
            return Err(Error::InvalidConfig(format!(
                "bank sizes ({}, {}, {}) do not match L = {}, G = {}, B = {}",
                encoders.len(),
                dec_first.len(),
                dec_second.len(),
                config.l(),
                config.g(),
                config.b()
            )));
        }
        let bottleneck_ok = encoders.iter().all(|e| e.fan_in() == m && e.fan_out() == n);
        let first_ok = dec_first.iter().all(|d| d.fan_in() == n && d.fan_out() == m);
        let second_ok = dec_second
            .iter()
            .all(|d| d.fan_in() == n + m && d.fan_out() == m);
        if !(bottleneck_ok && first_ok && second_ok) {
            return Err(Error::InvalidConfig(
                "bank shapes do not match the configuration".to_owned(),
            ));
        }
        Ok(Self {
            config,
            encoders,
            dec_first,
            dec_second,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn encoders(&self) -> &[Mlp<T>] {
        &self.encoders
    }

    pub fn dec_first(&self) -> &[Mlp<T>] {
        &self.dec_first
    }

    pub fn dec_second(&self) -> &[Mlp<T>] {
        &self.dec_second
    }

    /// All banks in canonical order: encoders, first stage, second stage.
    /// Gradient vectors from the pipeline use the same order.
    pub fn mlps(&self) -> impl Iterator<Item = &Mlp<T>> {
        self.encoders
            .iter()
            .chain(self.dec_first.iter())
            .chain(self.dec_second.iter())
    }

    pub fn mlps_mut(&mut self) -> impl Iterator<Item = &mut Mlp<T>> {
        self.encoders
            .iter_mut()
            .chain(self.dec_first.iter_mut())
            .chain(self.dec_second.iter_mut())
    }

    pub fn mlp_count(&self) -> usize {
        self.config.l() + self.config.g() + self.config.b()
    }

    /// Encodes one message given as `k1 + k2` bits.
    pub fn encode_message(&self, bits: &[u8]) -> Result<Array1<T>> {
        let batch = MessageBatch::from_bits(&[bits.to_vec()], &self.config)?;
        let x = pipeline::encode_infer(self, &batch)?;
        Ok(x.row(0).to_owned())
    }

    /// Decodes one received vector to `k1 + k2` hard-decision bits.
    pub fn decode_message(&self, received: &Array1<T>) -> Vec<u8> {
        let y = received.clone().insert_axis(ndarray::Axis(0));
        let decisions = pipeline::decode_hard(self, &y);
        let kb = self.config.subblock_bits;
        (0..self.config.l())
            .flat_map(|s| super::bits_from_index(decisions[(0, s)] as usize, kb))
            .collect()
    }
}

/// One encoder subblock, redrawn if initialization leaves any message
/// index with an exactly-zero output.
///
/// Encoder inputs are one-hots, so an index whose entire hidden row lands
/// dead (all ReLUs off) contributes nothing to the superposition and,
/// since the row's gradient is gated off too, can never recover. For
/// small subblock sizes this happens with noticeable probability; wider
/// hidden layers make a redraw essentially never necessary.
fn init_encoder<T: Scalar>(config: &CodecConfig, slot: u64) -> Result<Mlp<T>> {
    let (m, n) = (config.m(), config.n);
    for attempt in 0..64u64 {
        let seed = mix_seed(
            config.seed,
            streams::INIT_BASE + slot + (attempt << 32),
        );
        let mlp = Mlp::init(
            &[m, m, n],
            &[config.hidden_activation, Activation::Linear],
            seed,
        )?;
        let probe = mlp.infer_one_hot(&(0..m).collect::<Vec<_>>());
        let has_dead_index = probe
            .rows()
            .into_iter()
            .any(|r| r.iter().all(|&v| v == T::zero()));
        if !has_dead_index {
            return Ok(mlp);
        }
    }
    Err(Error::InvalidConfig(
        "could not initialize an encoder without dead message indices".to_owned(),
    ))
}
