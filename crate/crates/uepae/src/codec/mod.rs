//! The structured superposition codec.
//!
//! A `k = k1 + k2`-bit message splits into `L` subsequences of `K` bits.
//! Each subsequence drives its own small encoder MLP; the `L` bottleneck
//! outputs are summed (superposition) and projected onto the energy sphere.
//! Decoding runs in two SIC-style stages: `G` first-stage decoders read the
//! channel output directly, and their summed softmax outputs are
//! concatenated onto the channel output as a decoding hint for the `B`
//! second-stage decoders. A single weight `lambda` trades class-1 against
//! class-2 reliability in the compound loss.
//!
//! [`monolithic`] holds the single-autoencoder baseline for short messages,
//! where per-class losses come from multi-hot relaxations of the one-hot
//! target instead of separate subblocks.

mod config;
mod message;
mod model;
pub mod monolithic;
mod pipeline;
mod train;

pub use config::{CodecConfig, SicGradient};
pub use message::{
    bits_from_index, hard_decision, hard_decision_index, one_hot, one_hot_index,
    partition_message, random_message_indices, Class, MessageBatch,
};
pub use model::CodecModel;
pub use pipeline::{
    compound_loss, decode_batch, decode_hard, encode_batch, encode_infer, normalize,
    normalize_rows, normalize_rows_vjp, pipeline_loss, pipeline_step, DecodeOutput, EncodeOutput,
    StepOutput,
};
pub use train::{train, train_model, train_model_with, EpochRecord, TrainedCodec};
