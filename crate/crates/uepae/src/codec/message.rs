//! Message bits, subblock partitioning, one-hot indexing, hard decisions.
//!
//! Bit-to-index convention is MSB-first: bits `(b_0, ..., b_{K-1})` map to
//! index `sum b_i 2^(K-1-i)`. Argmax ties break toward the lowest index.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::codec::CodecConfig;
use crate::nn::Scalar;
use crate::{Error, Result};

/// Protection class of a subblock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    One,
    Two,
}

/// Splits `bits` into `L` subsequences of `K` bits, the first `G` tagged
/// class 1 and the remaining `B` class 2. Concatenating the outputs in
/// order reproduces the input.
pub fn partition_message<'a>(
    bits: &'a [u8],
    config: &CodecConfig,
) -> Result<Vec<(Class, &'a [u8])>> {
    let k = config.subblock_bits;
    if bits.len() != config.k() {
        return Err(Error::InvalidConfig(format!(
            "message length {} != k1 + k2 = {}",
            bits.len(),
            config.k()
        )));
    }
    Ok(bits
        .chunks_exact(k)
        .enumerate()
        .map(|(i, chunk)| {
            let class = if i < config.g() { Class::One } else { Class::Two };
            (class, chunk)
        })
        .collect())
}

/// MSB-first bit-vector to index.
pub fn one_hot_index(bits: &[u8]) -> usize {
    debug_assert!(bits.iter().all(|&b| b <= 1), "bits must be 0/1");
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// One-hot vector of length `2^K` for a `K`-bit subsequence.
pub fn one_hot<T: Scalar>(subseq: &[u8]) -> Array1<T> {
    let mut v = Array1::zeros(1 << subseq.len());
    v[one_hot_index(subseq)] = T::one();
    v
}

/// Index of the largest entry; ties break toward the lowest index.
pub fn hard_decision_index<T: Scalar>(simplex: &ArrayView1<T>) -> usize {
    let mut best = 0usize;
    let mut best_v = simplex[0];
    for (i, &v) in simplex.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// MSB-first bits of `index` in `k_bits` positions.
pub fn bits_from_index(index: usize, k_bits: usize) -> Vec<u8> {
    (0..k_bits)
        .map(|i| ((index >> (k_bits - 1 - i)) & 1) as u8)
        .collect()
}

/// Hard decision on a probability vector of length `2^K`: the bits of the
/// argmax index.
pub fn hard_decision<T: Scalar>(simplex: &ArrayView1<T>, k_bits: usize) -> Vec<u8> {
    assert_eq!(simplex.len(), 1 << k_bits, "simplex width != 2^K");
    bits_from_index(hard_decision_index(simplex), k_bits)
}

/// A batch of messages in per-subblock index form, shape `batch x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBatch {
    pub indices: Array2<u32>,
}

impl MessageBatch {
    pub fn from_indices(indices: Array2<u32>) -> Self {
        Self { indices }
    }

    /// Converts full bit-vectors into per-subblock indices.
    pub fn from_bits(rows: &[Vec<u8>], config: &CodecConfig) -> Result<Self> {
        let mut indices = Array2::zeros((rows.len(), config.l()));
        for (r, bits) in rows.iter().enumerate() {
            for (s, (_, chunk)) in partition_message(bits, config)?.iter().enumerate() {
                indices[(r, s)] = one_hot_index(chunk) as u32;
            }
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.nrows() == 0
    }

    /// Indices of subblock `s` across the batch, as `usize`.
    pub fn subblock(&self, s: usize) -> Vec<usize> {
        self.indices.column(s).iter().map(|&i| i as usize).collect()
    }
}

/// Uniform i.i.d. messages: `count` rows of `l` subblock indices in
/// `[0, 2^k_bits)`. Uniform bits and uniform per-subblock indices are the
/// same distribution.
pub fn random_message_indices<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    l: usize,
    k_bits: usize,
) -> MessageBatch {
    let m = 1u32 << k_bits;
    let indices = Array2::from_shape_fn((count, l), |_| rng.random_range(0..m));
    MessageBatch { indices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_config(k1: usize, k2: usize, k: usize) -> CodecConfig {
        CodecConfig {
            k1,
            k2,
            subblock_bits: k,
            n: 8,
            ..CodecConfig::default()
        }
    }

    #[test]
    fn partition_tags_classes_in_order() {
        let cfg = tiny_config(7, 7, 7);
        let bits: Vec<u8> = (0..14).map(|i| (i % 2) as u8).collect();
        let parts = partition_message(&bits, &cfg).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].0, Class::One);
        assert_eq!(parts[1].0, Class::Two);
        assert_eq!(parts[0].1, &bits[0..7]);
        assert_eq!(parts[1].1, &bits[7..14]);
    }

    #[test]
    fn forty_two_bits_in_blocks_of_seven_gives_six_subblocks() {
        let cfg = tiny_config(21, 21, 7);
        let bits = vec![0u8; 42];
        assert_eq!(partition_message(&bits, &cfg).unwrap().len(), 6);
    }

    #[test]
    fn wrong_length_rejected() {
        let cfg = tiny_config(21, 21, 7);
        assert!(partition_message(&vec![0u8; 20], &cfg).is_err());
    }

    #[test]
    fn msb_first_indexing() {
        assert_eq!(one_hot_index(&[0, 0]), 0);
        assert_eq!(one_hot_index(&[1, 0]), 2);
        assert_eq!(one_hot_index(&[1; 7]), 127);
        let v: Array1<f64> = one_hot(&[1, 0]);
        assert_eq!(v.len(), 4);
        assert_eq!(v[2], 1.0);
        assert_eq!(v.sum(), 1.0);
    }

    #[test]
    fn hard_decision_tie_breaks_low() {
        let uniform = Array1::from_elem(8, 0.125_f64);
        assert_eq!(hard_decision(&uniform.view(), 3), vec![0, 0, 0]);
        let mut e5 = Array1::zeros(8);
        e5[5] = 1.0_f64;
        assert_eq!(hard_decision(&e5.view(), 3), vec![1, 0, 1]);
    }

    proptest! {
        #[test]
        fn one_hot_then_hard_decision_is_identity(idx in 0usize..128) {
            let bits = bits_from_index(idx, 7);
            let v: Array1<f64> = one_hot(&bits);
            prop_assert_eq!(hard_decision(&v.view(), 7), bits);
        }

        #[test]
        fn partition_concatenation_is_identity(bits in proptest::collection::vec(0u8..2, 28)) {
            let cfg = tiny_config(14, 14, 7);
            let parts = partition_message(&bits, &cfg).unwrap();
            let rebuilt: Vec<u8> = parts.iter().flat_map(|(_, c)| c.iter().copied()).collect();
            prop_assert_eq!(rebuilt, bits);
        }
    }
}
