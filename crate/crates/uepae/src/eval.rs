//! Monte Carlo estimation of per-class block error probabilities.
//!
//! Every trial owns its RNG stream, addressed by `(seed, trial_index)`, so
//! counts are independent of execution order, worker count, and sharding:
//! any partition of the trial index range sums to the same totals. A
//! class counts as wrong when any of its subblocks misdecodes.

use ndarray::Array2;
use rayon::prelude::*;

use crate::bounds;
use crate::channel::{db_to_linear, mix_seed, noise_sigma, stream_rng, streams};
use crate::codec::{decode_hard, encode_infer, train, CodecConfig, CodecModel, MessageBatch};
use crate::nn::Scalar;
use crate::{Error, Result};

/// Trials per decode batch; also the sharding granularity inside a run.
const TRIAL_CHUNK: u64 = 2_048;
/// The early-stop rule is evaluated at these trial-count boundaries.
const STOP_CHECK_INTERVAL: u64 = 65_536;

const WILSON_Z: f64 = 1.959963984540054;

/// 95% Wilson score interval for `errors` successes in `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    assert!(errors <= trials, "errors exceed trials");
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // analytically exact endpoints; avoid roundoff dust at 0 and 1
    let lo = if errors == 0 { 0.0 } else { center - half };
    let hi = if errors == trials { 1.0 } else { center + half };
    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}

/// One Monte Carlo estimate of `(P1, P2)` with confidence intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPoint {
    pub lambda: f64,
    pub gamma_db: f64,
    pub trials: u64,
    pub errors1: u64,
    pub errors2: u64,
    pub p1_hat: f64,
    pub p2_hat: f64,
    pub ci1: (f64, f64),
    pub ci2: (f64, f64),
}

impl ErrorPoint {
    fn from_counts(lambda: f64, gamma_db: f64, counts: &TrialCounts) -> Self {
        Self {
            lambda,
            gamma_db,
            trials: counts.trials,
            errors1: counts.errors1,
            errors2: counts.errors2,
            p1_hat: counts.errors1 as f64 / counts.trials as f64,
            p2_hat: counts.errors2 as f64 / counts.trials as f64,
            ci1: wilson_interval(counts.errors1, counts.trials),
            ci2: wilson_interval(counts.errors2, counts.trials),
        }
    }

    /// Consistency against the converse region at this operating point:
    /// the lower confidence limit of `P1 + P2` must not fall below the sum
    /// floor. A violation signals an accounting bug, not a discovery.
    pub fn converse_consistent(&self, config: &CodecConfig) -> bool {
        let input = bounds::BoundInput::from_db(config.n, config.k1, config.k2, self.gamma_db)
            .expect("valid codec config");
        let floors = bounds::converse_floors(&input);
        self.ci1.0 + self.ci2.0 >= floors.sum
    }
}

/// Raw error counts; merging is plain addition, so any fold order works.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialCounts {
    pub trials: u64,
    pub errors1: u64,
    pub errors2: u64,
}

impl TrialCounts {
    pub fn merge(&mut self, other: &TrialCounts) {
        self.trials += other.trials;
        self.errors1 += other.errors1;
        self.errors2 += other.errors2;
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub gamma_db: f64,
    pub max_trials: u64,
    /// Early stop once both classes have at least this many errors;
    /// 0 disables the rule.
    pub target_errors: u64,
    pub seed: u64,
    /// Debug switch: transmit with zero noise.
    pub noiseless: bool,
}

impl EvalOptions {
    pub fn new(gamma_db: f64, max_trials: u64, target_errors: u64, seed: u64) -> Self {
        Self {
            gamma_db,
            max_trials,
            target_errors,
            seed,
            noiseless: false,
        }
    }
}

fn eval_sigma(config: &CodecConfig, opts: &EvalOptions) -> f64 {
    if opts.noiseless {
        0.0
    } else {
        noise_sigma(config.rate(), db_to_linear(opts.gamma_db))
    }
}

/// Estimates per-class error probabilities by simulation. Deterministic in
/// `opts.seed`; the stopping rule is checked at fixed trial-count
/// boundaries so early stopping is reproducible too.
pub fn estimate_error_probs(model: &CodecModel<f32>, opts: &EvalOptions) -> Result<ErrorPoint> {
    if opts.max_trials == 0 {
        return Err(Error::InvalidConfig("max_trials must be >= 1".to_owned()));
    }
    let sigma = eval_sigma(model.config(), opts);
    let mut counts = TrialCounts::default();
    let mut done = 0u64;
    while done < opts.max_trials {
        let hi = (done + STOP_CHECK_INTERVAL).min(opts.max_trials);
        counts.merge(&run_trial_range(model, sigma, opts.seed, done, hi)?);
        done = hi;
        if opts.target_errors > 0
            && counts.errors1.min(counts.errors2) >= opts.target_errors
        {
            break;
        }
    }
    Ok(ErrorPoint::from_counts(
        model.config().lambda,
        opts.gamma_db,
        &counts,
    ))
}

/// Evaluates exactly the trials in `[start, end)`; the shard entry point.
/// Summing shard counts over a partition of `[0, max_trials)` reproduces
/// an unsharded run with the stopping rule disabled.
pub fn evaluate_trial_range(
    model: &CodecModel<f32>,
    gamma_db: f64,
    noiseless: bool,
    seed: u64,
    start: u64,
    end: u64,
) -> Result<TrialCounts> {
    let opts = EvalOptions {
        gamma_db,
        max_trials: end,
        target_errors: 0,
        seed,
        noiseless,
    };
    let sigma = eval_sigma(model.config(), &opts);
    run_trial_range(model, sigma, seed, start, end)
}

fn run_trial_range(
    model: &CodecModel<f32>,
    sigma: f64,
    seed: u64,
    start: u64,
    end: u64,
) -> Result<TrialCounts> {
    let chunks: Vec<(u64, u64)> = (start..end)
        .step_by(TRIAL_CHUNK as usize)
        .map(|lo| (lo, (lo + TRIAL_CHUNK).min(end)))
        .collect();
    let partials: Vec<Result<TrialCounts>> = chunks
        .par_iter()
        .map(|&(lo, hi)| run_trial_chunk(model, sigma, seed, lo, hi))
        .collect();
    let mut total = TrialCounts::default();
    for partial in partials {
        total.merge(&partial?);
    }
    Ok(total)
}

/// One decode batch of trials. Each trial draws its message subblock
/// indices and then its noise row from its own stream.
fn run_trial_chunk(
    model: &CodecModel<f32>,
    sigma: f64,
    seed: u64,
    lo: u64,
    hi: u64,
) -> Result<TrialCounts> {
    use rand::Rng;
    let cfg = model.config();
    let (l, g, n, m) = (cfg.l(), cfg.g(), cfg.n, cfg.m() as u32);
    let count = (hi - lo) as usize;
    let mut indices = Array2::zeros((count, l));
    let mut noise = Array2::zeros((count, n));
    for (row, trial) in (lo..hi).enumerate() {
        let mut rng = stream_rng(seed, streams::TRIAL_BASE + trial);
        for s in 0..l {
            indices[(row, s)] = rng.random_range(0..m);
        }
        for c in 0..n {
            noise[(row, c)] = f32::standard_normal(&mut rng);
        }
    }
    let batch = MessageBatch::from_indices(indices);
    let x = encode_infer(model, &batch)?;
    let y = x + noise.mapv(|z| z * sigma as f32);
    let decided = decode_hard(model, &y);

    let mut counts = TrialCounts {
        trials: hi - lo,
        ..TrialCounts::default()
    };
    for row in 0..count {
        let wrong1 = (0..g).any(|s| decided[(row, s)] != batch.indices[(row, s)]);
        let wrong2 = (g..l).any(|s| decided[(row, s)] != batch.indices[(row, s)]);
        counts.errors1 += u64::from(wrong1);
        counts.errors2 += u64::from(wrong2);
    }
    Ok(counts)
}

/// One trained-and-evaluated point per lambda.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<ErrorPoint>,
    /// Lambdas whose training failed, with the diagnostic.
    pub failures: Vec<(f64, String)>,
}

/// Trains one codec per lambda (seed derived per index) and evaluates
/// each at the same operating point. Training failures are recorded and
/// skipped.
pub fn sweep_lambda(
    base_config: &CodecConfig,
    lambdas: &[f64],
    opts: &EvalOptions,
    mut on_event: impl FnMut(&str),
) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda list".to_owned()));
    }
    let mut distinct = lambdas.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() != lambdas.len() {
        return Err(Error::InvalidConfig("duplicate lambda values".to_owned()));
    }

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let config = CodecConfig {
            lambda,
            seed: mix_seed(base_config.seed, i as u64),
            ..base_config.clone()
        };
        config.validate()?;
        on_event(&format!("training lambda = {lambda} (seed {})", config.seed));
        match train(&config) {
            Ok(trained) => {
                let point_opts = EvalOptions {
                    seed: mix_seed(opts.seed, i as u64),
                    ..*opts
                };
                let point = estimate_error_probs(&trained.model, &point_opts)?;
                on_event(&format!(
                    "lambda = {lambda}: P1 = {:.3e}, P2 = {:.3e} ({} trials)",
                    point.p1_hat, point.p2_hat, point.trials
                ));
                points.push(point);
            }
            Err(e) => {
                on_event(&format!("lambda = {lambda} failed: {e}"));
                failures.push((lambda, e.to_string()));
            }
        }
    }
    Ok(SweepResult { points, failures })
}
