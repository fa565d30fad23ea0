//! Experiment description for one codec.

use crate::nn::Activation;
use crate::{Error, Result};

/// How gradients treat the summed first-stage softmax hint fed to the
/// second decoding stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SicGradient {
    /// Second-stage loss gradients flow back through the hint into the
    /// first-stage decoders (joint end-to-end training). The default.
    Flowthrough,
    /// The hint is treated as a constant (stop-gradient); kept for
    /// ablation.
    Detach,
}

impl SicGradient {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flowthrough" => Ok(SicGradient::Flowthrough),
            "detach" => Ok(SicGradient::Detach),
            other => Err(Error::InvalidConfig(format!(
                "unknown sic_gradient `{other}` (expected flowthrough|detach)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SicGradient::Flowthrough => "flowthrough",
            SicGradient::Detach => "detach",
        }
    }
}

/// Full description of one trainable codec.
///
/// `k1` (important) and `k2` (less important) bits must both be multiples
/// of the subblock size `K`; `G = k1/K` and `B = k2/K` subblocks handle
/// the two classes, `L = G + B` in total.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub k1: usize,
    pub k2: usize,
    /// Bits per subblock (`K`). Hidden layers are `2^K` wide.
    pub subblock_bits: usize,
    /// Blocklength: real channel uses per codeword.
    pub n: usize,
    /// Class-1 weight in the compound loss, in `(0, 1)`.
    pub lambda: f64,
    pub snr_train_db: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Early-stopping patience on held-out loss, in epochs.
    pub patience: usize,
    pub seed: u64,
    pub hidden_activation: Activation,
    pub sic_gradient: SicGradient,
    /// Rate used in the training-noise variance; defaults to the total
    /// `k/n`.
    pub train_noise_rate: Option<f64>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            k1: 21,
            k2: 21,
            subblock_bits: 7,
            n: 72,
            lambda: 0.5,
            snr_train_db: 0.0,
            learning_rate: 0.0006,
            batch_size: 500,
            epochs: 100,
            train_samples: 600_000,
            val_samples: 50_000,
            patience: 10,
            seed: 1,
            hidden_activation: Activation::Relu,
            sic_gradient: SicGradient::Flowthrough,
            train_noise_rate: None,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.subblock_bits == 0 {
            return fail("subblock_bits must be >= 1".into());
        }
        if self.subblock_bits > 16 {
            return fail(format!(
                "subblock_bits = {} would need 2^{} one-hot entries",
                self.subblock_bits, self.subblock_bits
            ));
        }
        if self.k1 == 0 || self.k1 % self.subblock_bits != 0 {
            return fail(format!(
                "k1 = {} is not a positive multiple of subblock_bits = {}",
                self.k1, self.subblock_bits
            ));
        }
        if self.k2 == 0 || self.k2 % self.subblock_bits != 0 {
            return fail(format!(
                "k2 = {} is not a positive multiple of subblock_bits = {}",
                self.k2, self.subblock_bits
            ));
        }
        if self.n == 0 {
            return fail("n must be >= 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return fail(format!("lambda = {} must lie in (0, 1)", self.lambda));
        }
        if self.learning_rate <= 0.0 {
            return fail("learning_rate must be positive".into());
        }
        if self.batch_size == 0 || self.epochs == 0 || self.train_samples == 0 {
            return fail("batch_size, epochs, train_samples must be >= 1".into());
        }
        if self.hidden_activation == Activation::Softmax {
            return fail("hidden_activation cannot be softmax".into());
        }
        if let Some(r) = self.train_noise_rate {
            if r <= 0.0 {
                return fail("train_noise_rate must be positive".into());
            }
        }
        Ok(())
    }

    /// Total message bits `k = k1 + k2`.
    pub fn k(&self) -> usize {
        self.k1 + self.k2
    }

    /// Class-1 subblock count.
    pub fn g(&self) -> usize {
        self.k1 / self.subblock_bits
    }

    /// Class-2 subblock count.
    pub fn b(&self) -> usize {
        self.k2 / self.subblock_bits
    }

    /// Total subblock count `L = G + B`.
    pub fn l(&self) -> usize {
        self.g() + self.b()
    }

    /// One-hot width per subblock, `M = 2^K`.
    pub fn m(&self) -> usize {
        1 << self.subblock_bits
    }

    /// Total rate in bits per channel use.
    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn rate1(&self) -> f64 {
        self.k1 as f64 / self.n as f64
    }

    pub fn rate2(&self) -> f64 {
        self.k2 as f64 / self.n as f64
    }

    /// Noise std-dev used during training.
    pub fn train_sigma(&self) -> f64 {
        let rate = self.train_noise_rate.unwrap_or_else(|| self.rate());
        crate::channel::noise_sigma(rate, crate::channel::db_to_linear(self.snr_train_db))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let cfg = CodecConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.k(), 42);
        assert_eq!(cfg.l(), 6);
        assert_eq!(cfg.g(), 3);
        assert_eq!(cfg.m(), 128);
        assert!((cfg.rate() - 42.0 / 72.0).abs() < 1e-15);
    }

    #[test]
    fn non_multiple_k1_rejected() {
        let cfg = CodecConfig {
            k1: 20,
            ..CodecConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lambda_bounds_enforced() {
        for lambda in [0.0, 1.0, -0.5, 1.5] {
            let cfg = CodecConfig {
                lambda,
                ..CodecConfig::default()
            };
            assert!(cfg.validate().is_err(), "lambda = {lambda} accepted");
        }
    }

    #[test]
    fn train_sigma_uses_total_rate_by_default() {
        let cfg = CodecConfig::default();
        // 0 dB, R = 42/72: sigma^2 = 6/7
        assert!((cfg.train_sigma().powi(2) - 6.0 / 7.0).abs() < 1e-12);
        let overridden = CodecConfig {
            train_noise_rate: Some(0.5),
            ..cfg
        };
        assert!((overridden.train_sigma().powi(2) - 1.0).abs() < 1e-12);
    }
}
