//! Single-autoencoder baseline for short messages.
//!
//! One encoder maps the whole `k`-bit message (one-hot over `2^k`) to a
//! codeword, one softmax decoder maps the channel output back. Per-class
//! losses come from multi-hot relaxations of the one-hot target: the
//! class-`j` target marks every message whose class-`j` submessage matches
//! the transmitted one, and the compound loss mixes the per-class terms
//! with a weight vector. One-hot width grows as `2^k`, so `k` is capped at
//! 14.

use ndarray::{Array1, Array2};

use crate::channel::{mix_seed, standard_normal_matrix, stream_rng, streams};
use crate::nn::{
    adam_step, cross_entropy_from_logits, softmax_ce_logit_grad_multi, AdamConfig, AdamState,
    Activation, Mlp, Scalar,
};
use crate::{Error, Result};

/// Largest tractable message size for the one-hot representation.
pub const MAX_MESSAGE_BITS: usize = 14;

/// Splits `k` into class lengths; general beyond two classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    lengths: Vec<usize>,
}

impl Partition {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths.iter().any(|&l| l == 0) {
            return Err(Error::InvalidConfig(
                "partition needs positive class lengths".to_owned(),
            ));
        }
        let k: usize = lengths.iter().sum();
        if k > MAX_MESSAGE_BITS {
            return Err(Error::InvalidConfig(format!(
                "k = {k} exceeds the monolithic limit of {MAX_MESSAGE_BITS} bits"
            )));
        }
        Ok(Self { lengths })
    }

    pub fn two_class(k1: usize, k2: usize) -> Result<Self> {
        Self::new(vec![k1, k2])
    }

    pub fn k(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn classes(&self) -> usize {
        self.lengths.len()
    }

    pub fn class_bits(&self, j: usize) -> usize {
        self.lengths[j]
    }

    /// Bit range `[start, end)` of class `j` within the message.
    pub fn class_range(&self, j: usize) -> (usize, usize) {
        let start: usize = self.lengths[..j].iter().sum();
        (start, start + self.lengths[j])
    }

    /// Class-`j` submessage value of a message index (MSB-first bits).
    pub fn submessage(&self, message: usize, j: usize) -> usize {
        let (start, end) = self.class_range(j);
        let shift = self.k() - end;
        (message >> shift) & ((1 << (end - start)) - 1)
    }
}

/// Multi-hot target for class `j`: ones at exactly the messages whose
/// class-`j` submessage matches that of `message`. The number of ones is
/// `2^(k - k_j)`.
pub fn modified_one_hot<T: Scalar>(message: usize, j: usize, partition: &Partition) -> Array1<T> {
    let k = partition.k();
    assert!(message < (1 << k), "message index out of range");
    let want = partition.submessage(message, j);
    let mut u = Array1::zeros(1 << k);
    for m in 0..(1usize << k) {
        if partition.submessage(m, j) == want {
            u[m] = T::one();
        }
    }
    u
}

/// Compound loss over a batch of probability rows: weighted sum of
/// per-class multi-hot cross-entropies. Weights must be positive and sum
/// to one.
pub fn compound_loss<T: Scalar>(
    messages: &[usize],
    probs: &Array2<T>,
    partition: &Partition,
    weights: &[f64],
) -> Result<T> {
    check_weights(weights, partition)?;
    let mut loss = T::zero();
    for (j, &w) in weights.iter().enumerate() {
        let targets = stack_targets::<T>(messages, j, partition);
        loss = loss + T::from_f64(w) * crate::nn::cross_entropy(&targets, probs)?;
    }
    Ok(loss)
}

/// Logit-space version of [`compound_loss`] (the training route).
pub fn compound_loss_from_logits<T: Scalar>(
    messages: &[usize],
    logits: &Array2<T>,
    partition: &Partition,
    weights: &[f64],
) -> Result<T> {
    check_weights(weights, partition)?;
    let mut loss = T::zero();
    for (j, &w) in weights.iter().enumerate() {
        let targets = stack_targets::<T>(messages, j, partition);
        loss = loss + T::from_f64(w) * cross_entropy_from_logits(&targets, logits);
    }
    Ok(loss)
}

fn check_weights(weights: &[f64], partition: &Partition) -> Result<()> {
    if weights.len() != partition.classes() {
        return Err(Error::InvalidConfig(format!(
            "{} weights for {} classes",
            weights.len(),
            partition.classes()
        )));
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::InvalidConfig(
            "class weights must be positive".to_owned(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "class weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn stack_targets<T: Scalar>(messages: &[usize], j: usize, partition: &Partition) -> Array2<T> {
    let width = 1usize << partition.k();
    let mut t = Array2::zeros((messages.len(), width));
    for (r, &msg) in messages.iter().enumerate() {
        t.row_mut(r).assign(&modified_one_hot::<T>(msg, j, partition));
    }
    t
}

/// The monolithic autoencoder pair.
#[derive(Debug, Clone)]
pub struct MonolithicCodec<T: Scalar> {
    pub partition: Partition,
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub n: usize,
}

impl<T: Scalar> MonolithicCodec<T> {
    /// `2^k -> 2^k -> n` encoder and `n -> 2^k -> 2^k` softmax decoder.
    pub fn init(partition: Partition, n: usize, seed: u64) -> Result<Self> {
        let m = 1usize << partition.k();
        let encoder = Mlp::init(
            &[m, m, n],
            &[Activation::Relu, Activation::Linear],
            mix_seed(seed, streams::INIT_BASE),
        )?;
        let decoder = Mlp::init(
            &[n, m, m],
            &[Activation::Relu, Activation::Softmax],
            mix_seed(seed, streams::INIT_BASE + 1),
        )?;
        Ok(Self {
            partition,
            encoder,
            decoder,
            n,
        })
    }

    /// Sphere-projected codewords for a batch of message indices.
    pub fn encode(&self, messages: &[usize]) -> Result<Array2<T>> {
        let (out, _) = self.encoder.forward_one_hot(messages);
        super::normalize_rows(&out)
    }

    /// Decoded message indices for received rows.
    pub fn decode(&self, y: &Array2<T>) -> Vec<usize> {
        let probs = self.decoder.infer(y);
        probs
            .rows()
            .into_iter()
            .map(|row| super::hard_decision_index(&row))
            .collect()
    }

    /// A few epochs of Adam on the compound loss; small-scale baseline
    /// training, deterministic in `seed`.
    pub fn train(
        &mut self,
        weights: &[f64],
        sigma: f64,
        samples: usize,
        batch_size: usize,
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        check_weights(weights, &self.partition)?;
        let m = 1usize << self.partition.k();
        let sigma = T::from_f64(sigma);
        let mut enc_state = AdamState::new(&self.encoder, AdamConfig::new(lr));
        let mut dec_state = AdamState::new(&self.decoder, AdamConfig::new(lr));
        let mut data_rng = stream_rng(seed, streams::DATASET);
        let messages: Vec<usize> = (0..samples)
            .map(|_| rand::Rng::random_range(&mut data_rng, 0..m))
            .collect();
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut noise_rng = stream_rng(seed, streams::EPOCH_NOISE_BASE + epoch as u64);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in messages.chunks(batch_size) {
                let (enc_out, enc_tape) = self.encoder.forward_one_hot(chunk);
                let x = super::normalize_rows(&enc_out)?;
                let noise = standard_normal_matrix::<T, _>(&mut noise_rng, chunk.len(), self.n)
                    .mapv(|z| z * sigma);
                let y = &x + &noise;
                let (probs, dec_tape) = self.decoder.forward(&y);
                let logits = dec_tape.logits();
                let loss =
                    compound_loss_from_logits(chunk, logits, &self.partition, weights)?.to_f64();
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss });
                }

                // fused gradient: sum over classes of w_j (mass_j p - u_j)
                let inv_batch = T::one() / T::from_f64(chunk.len() as f64);
                let mut dz = Array2::zeros(probs.raw_dim());
                for (j, &w) in weights.iter().enumerate() {
                    let targets = stack_targets::<T>(chunk, j, &self.partition);
                    dz += &softmax_ce_logit_grad_multi(
                        &probs,
                        &targets,
                        T::from_f64(w) * inv_batch,
                    );
                }
                let (dec_grads, d_y) = self.decoder.backward_from_logits(&dec_tape, dz);
                let d_pre = super::normalize_rows_vjp(&enc_out, &d_y.expect("dense input"));
                let (enc_grads, _) = self.encoder.backward(&enc_tape, &d_pre);

                adam_step(&mut self.decoder, &dec_grads, &mut dec_state)?;
                adam_step(&mut self.encoder, &enc_grads, &mut enc_state)?;
                epoch_loss += loss;
                batches += 1;
            }
            history.push(epoch_loss / batches as f64);
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modified_one_hot_enumerates_matching_messages() {
        // k = 2, k1 = k2 = 1, message 01, class 1 -> messages {00, 01}
        let p = Partition::two_class(1, 1).unwrap();
        let u: Array1<f64> = modified_one_hot(0b01, 0, &p);
        assert_eq!(u.to_vec(), vec![1.0, 1.0, 0.0, 0.0]);
        // class 2 -> messages {01, 11}
        let u: Array1<f64> = modified_one_hot(0b01, 1, &p);
        assert_eq!(u.to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn popcount_is_two_to_k_minus_kj() {
        let p = Partition::two_class(2, 2).unwrap();
        for msg in 0..16 {
            for j in 0..2 {
                let u: Array1<f64> = modified_one_hot(msg, j, &p);
                let ones = u.iter().filter(|&&v| v == 1.0).count();
                assert_eq!(ones, 4, "msg {msg} class {j}");
            }
        }
    }

    #[test]
    fn full_width_class_reduces_to_plain_one_hot() {
        let p = Partition::new(vec![3]).unwrap();
        let u: Array1<f64> = modified_one_hot(5, 0, &p);
        let ones: Vec<usize> = u
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones, vec![5]);
    }

    #[test]
    fn single_class_compound_equals_plain_cross_entropy() {
        let p = Partition::new(vec![3]).unwrap();
        let mut rng = stream_rng(4, 0);
        let logits = standard_normal_matrix::<f64, _>(&mut rng, 6, 8);
        let probs = crate::nn::softmax(&logits);
        let messages = vec![0usize, 3, 7, 1, 4, 2];
        let compound = compound_loss(&messages, &probs, &p, &[1.0]).unwrap();
        let targets = stack_targets::<f64>(&messages, 0, &p);
        let plain = crate::nn::cross_entropy(&targets, &probs).unwrap();
        assert!((compound - plain).abs() < 1e-12);
    }

    #[test]
    fn uniform_probs_give_two_ln_four() {
        // k = 2, k1 = k2 = 1, uniform predictions: each class term is
        // -2 log(1/4), so any valid weight vector gives 2 ln 4
        let p = Partition::two_class(1, 1).unwrap();
        let probs = Array2::from_elem((1, 4), 0.25_f64);
        for weights in [[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]] {
            let loss = compound_loss(&[2], &probs, &p, &weights).unwrap();
            assert!((loss - 2.0 * 4.0_f64.ln()).abs() < 1e-12, "loss {loss}");
        }
    }

    #[test]
    fn extreme_weight_approaches_single_class_loss() {
        let p = Partition::two_class(2, 2).unwrap();
        let mut rng = stream_rng(5, 0);
        let logits = standard_normal_matrix::<f64, _>(&mut rng, 4, 16);
        let probs = crate::nn::softmax(&logits);
        let messages = vec![1usize, 7, 12, 3];
        let eps = 1e-9;
        let skewed = compound_loss(&messages, &probs, &p, &[1.0 - eps, eps]).unwrap();
        let targets = stack_targets::<f64>(&messages, 0, &p);
        let class1 = crate::nn::cross_entropy(&targets, &probs).unwrap();
        assert!((skewed - class1).abs() < 1e-6);
    }

    #[test]
    fn weight_vector_violations_rejected() {
        let p = Partition::two_class(1, 1).unwrap();
        let probs = Array2::from_elem((1, 4), 0.25_f64);
        assert!(compound_loss(&[0], &probs, &p, &[0.5, 0.6]).is_err());
        assert!(compound_loss(&[0], &probs, &p, &[1.0, 0.0]).is_err());
        assert!(compound_loss(&[0], &probs, &p, &[1.0]).is_err());
    }

    #[test]
    fn oversized_k_rejected() {
        assert!(Partition::two_class(8, 8).is_err());
    }

    #[test]
    fn baseline_trains_to_low_loss_on_tiny_code() {
        let p = Partition::two_class(2, 2).unwrap();
        let mut codec: MonolithicCodec<f32> = MonolithicCodec::init(p, 8, 3).unwrap();
        let history = codec
            .train(&[0.5, 0.5], 0.2, 4000, 100, 25, 0.004, 3)
            .unwrap();
        let (first, last) = (history[0], *history.last().unwrap());
        // the multi-hot optimum here is -[ln(1/4) + 6*0.5*ln(1/8)] ~ 7.62,
        // not zero: each class target spreads mass over 4 messages
        assert!(last < 8.1, "stopped at {last} (start {first}, floor ~7.62)");
        // noiseless round trip after training
        let messages: Vec<usize> = (0..16).collect();
        let x = codec.encode(&messages).unwrap();
        let decoded = codec.decode(&x);
        let wrong = decoded
            .iter()
            .zip(&messages)
            .filter(|(a, b)| a != b)
            .count();
        assert!(wrong <= 1, "{wrong}/16 wrong noiselessly");
    }
}
