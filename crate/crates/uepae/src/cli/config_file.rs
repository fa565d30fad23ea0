//! Flat `key = value` experiment files.
//!
//! One key per line, `#` starts a comment, unknown keys are rejected.
//! Missing keys fall back to the defaults. The documented key list:
//!
//! ```text
//! k1, k2, subblock_bits, n, lambda, snr_train_db, learning_rate,
//! batch_size, epochs, train_samples, val_samples, patience, seed,
//! hidden_activation (relu|linear), sic_gradient (flowthrough|detach),
//! train_noise_rate (optional), gamma_eval_db, max_trials, target_errors,
//! converse_grid, achievable_grid
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::codec::{CodecConfig, SicGradient};
use crate::nn::Activation;
use crate::{Error, Result};

/// A codec description plus evaluation and bound-grid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub codec: CodecConfig,
    pub gamma_eval_db: f64,
    pub max_trials: u64,
    pub target_errors: u64,
    pub converse_grid: usize,
    pub achievable_grid: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            codec: CodecConfig::default(),
            gamma_eval_db: 5.0,
            max_trials: 1_500_000,
            target_errors: 100,
            converse_grid: 512,
            achievable_grid: 1024,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        Error::InvalidConfig(format!("line {line}: cannot parse `{value}` for key `{key}`"))
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {line_no}: expected `key = value`, got `{raw}`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "k1" => cfg.codec.k1 = parse_value(key, value, line_no)?,
                "k2" => cfg.codec.k2 = parse_value(key, value, line_no)?,
                "subblock_bits" => cfg.codec.subblock_bits = parse_value(key, value, line_no)?,
                "n" => cfg.codec.n = parse_value(key, value, line_no)?,
                "lambda" => cfg.codec.lambda = parse_value(key, value, line_no)?,
                "snr_train_db" => cfg.codec.snr_train_db = parse_value(key, value, line_no)?,
                "learning_rate" => cfg.codec.learning_rate = parse_value(key, value, line_no)?,
                "batch_size" => cfg.codec.batch_size = parse_value(key, value, line_no)?,
                "epochs" => cfg.codec.epochs = parse_value(key, value, line_no)?,
                "train_samples" => cfg.codec.train_samples = parse_value(key, value, line_no)?,
                "val_samples" => cfg.codec.val_samples = parse_value(key, value, line_no)?,
                "patience" => cfg.codec.patience = parse_value(key, value, line_no)?,
                "seed" => cfg.codec.seed = parse_value(key, value, line_no)?,
                "hidden_activation" => cfg.codec.hidden_activation = Activation::parse(value)?,
                "sic_gradient" => cfg.codec.sic_gradient = SicGradient::parse(value)?,
                "train_noise_rate" => {
                    cfg.codec.train_noise_rate = Some(parse_value(key, value, line_no)?)
                }
                "gamma_eval_db" => cfg.gamma_eval_db = parse_value(key, value, line_no)?,
                "max_trials" => cfg.max_trials = parse_value(key, value, line_no)?,
                "target_errors" => cfg.target_errors = parse_value(key, value, line_no)?,
                "converse_grid" => cfg.converse_grid = parse_value(key, value, line_no)?,
                "achievable_grid" => cfg.achievable_grid = parse_value(key, value, line_no)?,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {line_no}: unknown key `{other}`"
                    )))
                }
            }
        }
        cfg.codec.validate()?;
        if cfg.max_trials == 0 {
            return Err(Error::InvalidConfig("max_trials must be >= 1".to_owned()));
        }
        if cfg.converse_grid < 2 || cfg.achievable_grid < 2 {
            return Err(Error::InvalidConfig("grids need at least 2 points".to_owned()));
        }
        Ok(cfg)
    }

    /// Canonical text form; parsing it back reproduces the value exactly.
    pub fn to_text(&self) -> String {
        let c = &self.codec;
        let mut s = String::new();
        let _ = writeln!(s, "k1 = {}", c.k1);
        let _ = writeln!(s, "k2 = {}", c.k2);
        let _ = writeln!(s, "subblock_bits = {}", c.subblock_bits);
        let _ = writeln!(s, "n = {}", c.n);
        let _ = writeln!(s, "lambda = {}", c.lambda);
        let _ = writeln!(s, "snr_train_db = {}", c.snr_train_db);
        let _ = writeln!(s, "learning_rate = {}", c.learning_rate);
        let _ = writeln!(s, "batch_size = {}", c.batch_size);
        let _ = writeln!(s, "epochs = {}", c.epochs);
        let _ = writeln!(s, "train_samples = {}", c.train_samples);
        let _ = writeln!(s, "val_samples = {}", c.val_samples);
        let _ = writeln!(s, "patience = {}", c.patience);
        let _ = writeln!(s, "seed = {}", c.seed);
        let _ = writeln!(s, "hidden_activation = {}", c.hidden_activation.name());
        let _ = writeln!(s, "sic_gradient = {}", c.sic_gradient.name());
        if let Some(r) = c.train_noise_rate {
            let _ = writeln!(s, "train_noise_rate = {r}");
        }
        let _ = writeln!(s, "gamma_eval_db = {}", self.gamma_eval_db);
        let _ = writeln!(s, "max_trials = {}", self.max_trials);
        let _ = writeln!(s, "target_errors = {}", self.target_errors);
        let _ = writeln!(s, "converse_grid = {}", self.converse_grid);
        let _ = writeln!(s, "achievable_grid = {}", self.achievable_grid);
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::commands::write_atomic(path, self.to_text().as_bytes())
    }
}
