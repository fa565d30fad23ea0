//! AWGN channel with explicit SNR accounting and reproducible RNG streams.
//!
//! SNR bookkeeping: for a code of rate `R` bits per channel use at
//! signal-to-noise ratio `gamma` (linear Eb/N0), the per-dimension noise
//! variance is `sigma^2 = 1 / (2 R gamma)`, with unit-energy-per-dimension
//! codewords.
//!
//! RNG contract: every random quantity is drawn from a counter-based
//! ChaCha stream addressed by `(seed, stream)`. Streams are derived by key
//! separation, so shards and trials own disjoint, individually
//! reconstructible generators; nothing depends on execution order.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::Scalar;

/// Stream IDs used by the training loop and evaluator. Monte Carlo trial
/// streams occupy the low range `[TRIAL_BASE, TRIAL_BASE + trial_index]`.
pub mod streams {
    pub const TRIAL_BASE: u64 = 0;
    pub const DATASET: u64 = 1 << 56;
    pub const VAL_DATASET: u64 = 2 << 56;
    pub const VAL_NOISE: u64 = 3 << 56;
    pub const INIT_BASE: u64 = 4 << 56;
    pub const EPOCH_NOISE_BASE: u64 = 5 << 56;
    pub const SHUFFLE_BASE: u64 = 6 << 56;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic, platform-independent generator for `(seed, stream)`.
///
/// The 256-bit ChaCha key is expanded from the pair with a splitmix64
/// chain, so distinct streams of the same seed are statistically
/// independent and any stream can be reconstructed in isolation.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut st = seed;
    let h = splitmix64(&mut st);
    let mut st = h ^ stream;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut st).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derives an independent sub-seed, e.g. one per lambda in a sweep.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut st = seed;
    let h = splitmix64(&mut st);
    let mut st = h ^ salt.wrapping_mul(0xA076_1D64_78BD_642F);
    splitmix64(&mut st)
}

/// Converts dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10.0_f64.powf(db / 10.0)
}

/// Per-dimension noise standard deviation `sigma = (2 R gamma)^(-1/2)`.
pub fn noise_sigma(rate_bits: f64, gamma: f64) -> f64 {
    assert!(rate_bits > 0.0, "rate must be positive, got {rate_bits}");
    assert!(gamma > 0.0, "linear SNR must be positive, got {gamma}");
    1.0 / (2.0 * rate_bits * gamma).sqrt()
}

/// An SNR operating point tied to a code rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSpec {
    pub gamma_db: f64,
    pub gamma: f64,
    pub rate_bits: f64,
}

impl SnrSpec {
    pub fn from_db(gamma_db: f64, rate_bits: f64) -> Self {
        assert!(rate_bits > 0.0, "rate must be positive, got {rate_bits}");
        Self {
            gamma_db,
            gamma: db_to_linear(gamma_db),
            rate_bits,
        }
    }

    pub fn sigma(&self) -> f64 {
        noise_sigma(self.rate_bits, self.gamma)
    }
}

/// `y = x + z`, `z` i.i.d. zero-mean Gaussian with std-dev `sigma`, drawn
/// row-major from `rng`. `sigma = 0` returns `x` exactly (draws still
/// advance the stream so call sites stay aligned).
pub fn transmit<T: Scalar, R: Rng + ?Sized>(x: &Array2<T>, sigma: T, rng: &mut R) -> Array2<T> {
    assert!(sigma >= T::zero(), "sigma must be non-negative");
    let mut y = x.clone();
    for v in y.iter_mut() {
        *v = *v + sigma * T::standard_normal(rng);
    }
    y
}

/// A `rows x cols` matrix of standard-normal draws, row-major order.
pub fn standard_normal_matrix<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> Array2<T> {
    let data: Vec<T> = (0..rows * cols).map(|_| T::standard_normal(rng)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches data length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::q_func;
    use ndarray::Array2;

    #[test]
    fn sigma_formula_anchors() {
        // R = 1/2 at 0 dB collapses to unit variance
        assert!((noise_sigma(0.5, 1.0).powi(2) - 1.0).abs() < 1e-15);
        // R = 42/72 at 0 dB: sigma^2 = 6/7
        let s2 = noise_sigma(42.0 / 72.0, 1.0).powi(2);
        assert!((s2 - 6.0 / 7.0).abs() < 1e-12, "sigma^2 = {s2}");
        // high SNR limit
        assert!(noise_sigma(0.5, 1e12) < 1e-5);
    }

    #[test]
    fn transmit_is_deterministic_per_stream() {
        let x = Array2::<f32>::zeros((4, 8));
        let a = transmit(&x, 1.0, &mut stream_rng(42, 7));
        let b = transmit(&x, 1.0, &mut stream_rng(42, 7));
        let c = transmit(&x, 1.0, &mut stream_rng(42, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_sigma_is_exact() {
        let mut rng = stream_rng(1, 1);
        let x = standard_normal_matrix::<f32, _>(&mut rng, 5, 7);
        let y = transmit(&x, 0.0, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn noise_moments_match_over_a_million_draws() {
        let mut rng = stream_rng(3, 2);
        let n = 1_000_000usize;
        let z = standard_normal_matrix::<f64, _>(&mut rng, 1000, 1000);
        let mean = z.sum() / n as f64;
        let var = z.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean = {mean}");
        assert!((var - 1.0).abs() < 0.01, "var = {var}");
    }

    // Antipodal signaling end-to-end: BER must be Q(sqrt(2 gamma)).
    // Validates the whole SNR bookkeeping chain against the closed form.
    #[test]
    fn bpsk_ber_matches_q_function() {
        let trials = 200_000usize;
        for (case, &gamma_db) in [0.0, 3.0].iter().enumerate() {
            let gamma = db_to_linear(gamma_db);
            let sigma = noise_sigma(1.0, gamma); // one bit per dimension
            let mut rng = stream_rng(11, case as u64);
            let mut errors = 0usize;
            for _ in 0..trials {
                let bit = rng.random_range(0..2u8);
                let x = if bit == 1 { 1.0 } else { -1.0 };
                let y = x + sigma * f64::standard_normal(&mut rng);
                let decided = u8::from(y > 0.0);
                errors += usize::from(decided != bit);
            }
            let ber = errors as f64 / trials as f64;
            let expected = q_func((2.0 * gamma).sqrt());
            let tol = 3.0 * (expected * (1.0 - expected) / trials as f64).sqrt();
            assert!(
                (ber - expected).abs() < tol,
                "{gamma_db} dB: ber {ber} vs {expected} (tol {tol})"
            );
        }
    }
}
