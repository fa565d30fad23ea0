//! Forward and backward passes through the full codec:
//! one-hot subblocks -> encoders -> superposition -> sphere projection ->
//! (+ noise) -> first-stage decoders -> summed softmax hint ->
//! second-stage decoders -> weighted compound loss.
//!
//! Gradients are exact, including the sphere-projection Jacobian, the
//! superposition fan-out, and (in flowthrough mode) the path through the
//! summed softmax hint into the first-stage decoders.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::codec::{CodecModel, MessageBatch, SicGradient};
use crate::nn::{
    cross_entropy, cross_entropy_from_logits_onehot, softmax_ce_logit_grad, softmax_vjp,
    BatchTape, Gradients, Scalar,
};
use crate::{Error, Result};

const DEGENERATE_NORM: f64 = 1e-12;

// ----------------------------------------------------------------------
// sphere projection
// ----------------------------------------------------------------------

/// Projects `v` onto the energy sphere: `sqrt(n) * v / |v|`, so the output
/// satisfies `|x|^2 = n`. Errors when `|v|` is degenerate.
pub fn normalize<T: Scalar>(v: &ArrayView1<T>) -> Result<Array1<T>> {
    let norm = v.iter().map(|&a| a * a).sum::<T>().sqrt();
    if norm < T::from_f64(DEGENERATE_NORM) {
        return Err(Error::DegenerateCodeword);
    }
    let scale = T::from_f64((v.len() as f64).sqrt()) / norm;
    Ok(v.mapv(|a| a * scale))
}

/// Row-wise [`normalize`].
pub fn normalize_rows<T: Scalar>(v: &Array2<T>) -> Result<Array2<T>> {
    let mut out = v.clone();
    let sqrt_n = T::from_f64((v.ncols() as f64).sqrt());
    let floor = T::from_f64(DEGENERATE_NORM);
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|&a| a * a).sum::<T>().sqrt();
        if norm < floor {
            return Err(Error::DegenerateCodeword);
        }
        let scale = sqrt_n / norm;
        row.mapv_inplace(|a| a * scale);
    }
    Ok(out)
}

/// Exact Jacobian-transpose product of the sphere projection, row-wise:
/// `g -> sqrt(n)/|v| * (g - v <v, g> / |v|^2)`.
pub fn normalize_rows_vjp<T: Scalar>(v: &Array2<T>, upstream: &Array2<T>) -> Array2<T> {
    assert_eq!(v.dim(), upstream.dim(), "vjp shape mismatch");
    let sqrt_n = T::from_f64((v.ncols() as f64).sqrt());
    let mut out = upstream.clone();
    for (mut g, vr) in out.rows_mut().into_iter().zip(v.rows()) {
        let norm_sq: T = vr.iter().map(|&a| a * a).sum();
        let norm = norm_sq.sqrt();
        let dot: T = g.iter().zip(vr.iter()).map(|(&a, &b)| a * b).sum();
        let coeff = dot / norm_sq;
        for (gi, &vi) in g.iter_mut().zip(vr.iter()) {
            *gi = sqrt_n / norm * (*gi - vi * coeff);
        }
    }
    out
}

// ----------------------------------------------------------------------
// forward
// ----------------------------------------------------------------------

/// Encoder-side forward state for a batch.
pub struct EncodeOutput<T: Scalar> {
    /// Superposition sum before the sphere projection, `batch x n`.
    pub pre_sum: Array2<T>,
    /// Transmitted codewords, `batch x n`, every row with `|x|^2 = n`.
    pub codeword: Array2<T>,
    tapes: Vec<BatchTape<T>>,
}

/// Runs every encoder subblock, superposes, and projects. Records tapes.
pub fn encode_batch<T: Scalar>(
    model: &CodecModel<T>,
    batch: &MessageBatch,
) -> Result<EncodeOutput<T>> {
    let cfg = model.config();
    assert_eq!(batch.indices.ncols(), cfg.l(), "message batch has wrong L");
    let mut pre_sum = Array2::zeros((batch.len(), cfg.n));
    let mut tapes = Vec::with_capacity(cfg.l());
    for (l, enc) in model.encoders().iter().enumerate() {
        let (out, tape) = enc.forward_one_hot(&batch.subblock(l));
        pre_sum += &out;
        tapes.push(tape);
    }
    let codeword = normalize_rows(&pre_sum)?;
    Ok(EncodeOutput {
        pre_sum,
        codeword,
        tapes,
    })
}

/// Tape-free encoding for inference.
pub fn encode_infer<T: Scalar>(model: &CodecModel<T>, batch: &MessageBatch) -> Result<Array2<T>> {
    let cfg = model.config();
    assert_eq!(batch.indices.ncols(), cfg.l(), "message batch has wrong L");
    let mut pre_sum = Array2::zeros((batch.len(), cfg.n));
    for (l, enc) in model.encoders().iter().enumerate() {
        pre_sum += &enc.infer_one_hot(&batch.subblock(l));
    }
    normalize_rows(&pre_sum)
}

/// Decoder-side forward state for a batch.
pub struct DecodeOutput<T: Scalar> {
    /// Sum of the first-stage softmax outputs, `batch x 2^K`; the SIC hint.
    pub hint: Array2<T>,
    tapes_first: Vec<BatchTape<T>>,
    tapes_second: Vec<BatchTape<T>>,
}

impl<T: Scalar> DecodeOutput<T> {
    pub fn first_probs(&self, i: usize) -> &Array2<T> {
        self.tapes_first[i].output()
    }

    pub fn second_probs(&self, j: usize) -> &Array2<T> {
        self.tapes_second[j].output()
    }

    pub fn first_logits(&self, i: usize) -> &Array2<T> {
        self.tapes_first[i].logits()
    }

    pub fn second_logits(&self, j: usize) -> &Array2<T> {
        self.tapes_second[j].logits()
    }

    /// All `L` probability blocks in subblock order.
    pub fn all_probs(&self) -> Vec<&Array2<T>> {
        self.tapes_first
            .iter()
            .chain(self.tapes_second.iter())
            .map(|t| t.output())
            .collect()
    }
}

/// Runs both decoder stages on channel output `y`, recording tapes.
pub fn decode_batch<T: Scalar>(model: &CodecModel<T>, y: &Array2<T>) -> DecodeOutput<T> {
    let cfg = model.config();
    assert_eq!(y.ncols(), cfg.n, "received width != n");
    let mut hint = Array2::zeros((y.nrows(), cfg.m()));
    let mut tapes_first = Vec::with_capacity(cfg.g());
    for dec in model.dec_first() {
        let (probs, tape) = dec.forward(y);
        hint += &probs;
        tapes_first.push(tape);
    }
    let joined = concat_cols(y, &hint);
    let tapes_second = model
        .dec_second()
        .iter()
        .map(|dec| dec.forward(&joined).1)
        .collect();
    DecodeOutput {
        hint,
        tapes_first,
        tapes_second,
    }
}

/// Tape-free hard decisions: argmax subblock indices, `batch x L`.
pub fn decode_hard<T: Scalar>(model: &CodecModel<T>, y: &Array2<T>) -> Array2<u32> {
    let cfg = model.config();
    assert_eq!(y.ncols(), cfg.n, "received width != n");
    let mut decisions = Array2::zeros((y.nrows(), cfg.l()));
    let mut hint = Array2::zeros((y.nrows(), cfg.m()));
    for (i, dec) in model.dec_first().iter().enumerate() {
        let probs = dec.infer(y);
        argmax_into(&probs, decisions.column_mut(i));
        hint += &probs;
    }
    let joined = concat_cols(y, &hint);
    for (j, dec) in model.dec_second().iter().enumerate() {
        let probs = dec.infer(&joined);
        argmax_into(&probs, decisions.column_mut(cfg.g() + j));
    }
    decisions
}

fn argmax_into<T: Scalar>(probs: &Array2<T>, mut out: ndarray::ArrayViewMut1<u32>) {
    for (row, slot) in probs.rows().into_iter().zip(out.iter_mut()) {
        *slot = super::hard_decision_index(&row) as u32;
    }
}

fn concat_cols<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match")
}

// ----------------------------------------------------------------------
// loss
// ----------------------------------------------------------------------

/// Weighted compound loss over probability outputs: the first `g` pairs
/// carry weight `lambda`, the rest `1 - lambda`. Each term is a batch-mean
/// cross-entropy.
pub fn compound_loss<T: Scalar>(
    targets: &[Array2<T>],
    outputs: &[Array2<T>],
    g: usize,
    lambda: T,
) -> Result<T> {
    if !(lambda > T::zero() && lambda < T::one()) {
        return Err(Error::InvalidConfig(format!(
            "lambda = {lambda} must lie in (0, 1)"
        )));
    }
    assert_eq!(targets.len(), outputs.len(), "pair count mismatch");
    assert!(g <= targets.len(), "class split exceeds pair count");
    let mut loss = T::zero();
    for (i, (u, b)) in targets.iter().zip(outputs).enumerate() {
        let w = if i < g { lambda } else { T::one() - lambda };
        loss = loss + w * cross_entropy(u, b)?;
    }
    Ok(loss)
}

fn compound_loss_from_logits<T: Scalar>(
    model: &CodecModel<T>,
    batch: &MessageBatch,
    dec: &DecodeOutput<T>,
) -> T {
    let cfg = model.config();
    let lambda = T::from_f64(cfg.lambda);
    let mut loss = T::zero();
    for i in 0..cfg.g() {
        loss = loss
            + lambda * cross_entropy_from_logits_onehot(&batch.subblock(i), dec.first_logits(i));
    }
    for j in 0..cfg.b() {
        loss = loss
            + (T::one() - lambda)
                * cross_entropy_from_logits_onehot(
                    &batch.subblock(cfg.g() + j),
                    dec.second_logits(j),
                );
    }
    loss
}

// ----------------------------------------------------------------------
// full pipeline
// ----------------------------------------------------------------------

/// Forward-only loss of the full pipeline for a fixed noise realization.
pub fn pipeline_loss<T: Scalar>(
    model: &CodecModel<T>,
    batch: &MessageBatch,
    noise: &Array2<T>,
) -> Result<T> {
    let enc = encode_batch(model, batch)?;
    assert_eq!(noise.dim(), enc.codeword.dim(), "noise shape mismatch");
    let y = &enc.codeword + noise;
    let dec = decode_batch(model, &y);
    Ok(compound_loss_from_logits(model, batch, &dec))
}

/// Loss plus exact parameter gradients for one batch and noise
/// realization.
pub struct StepOutput<T: Scalar> {
    pub loss: T,
    /// One gradient set per bank, in [`CodecModel::mlps`] order.
    pub grads: Vec<Gradients<T>>,
}

pub fn pipeline_step<T: Scalar>(
    model: &CodecModel<T>,
    batch: &MessageBatch,
    noise: &Array2<T>,
) -> Result<StepOutput<T>> {
    let cfg = model.config();
    let (g_cnt, b_cnt, n, lambda) = (cfg.g(), cfg.b(), cfg.n, T::from_f64(cfg.lambda));
    let inv_batch = T::one() / T::from_f64(batch.len() as f64);

    let enc = encode_batch(model, batch)?;
    assert_eq!(noise.dim(), enc.codeword.dim(), "noise shape mismatch");
    let y = &enc.codeword + noise;
    let dec = decode_batch(model, &y);
    let loss = compound_loss_from_logits(model, batch, &dec);

    // second stage: fused cross-entropy gradients; split the input
    // gradient into its channel part and its hint part
    let mut d_y = Array2::zeros((batch.len(), n));
    let mut d_hint = Array2::zeros((batch.len(), cfg.m()));
    let mut grads_second = Vec::with_capacity(b_cnt);
    for j in 0..b_cnt {
        let targets = batch.subblock(g_cnt + j);
        let dz = softmax_ce_logit_grad(
            dec.second_probs(j),
            &targets,
            (T::one() - lambda) * inv_batch,
        );
        let (grads, d_in) = model.dec_second()[j].backward_from_logits(&dec.tapes_second[j], dz);
        let d_in = d_in.expect("dense input");
        d_y += &d_in.slice(s![.., 0..n]);
        d_hint += &d_in.slice(s![.., n..]);
        grads_second.push(grads);
    }

    // first stage: own cross-entropy gradient, plus (flowthrough only) the
    // hint gradient pushed through each softmax
    let mut grads_first = Vec::with_capacity(g_cnt);
    for i in 0..g_cnt {
        let probs = dec.first_probs(i);
        let mut dz = softmax_ce_logit_grad(probs, &batch.subblock(i), lambda * inv_batch);
        if cfg.sic_gradient == SicGradient::Flowthrough {
            dz += &softmax_vjp(probs, &d_hint);
        }
        let (grads, d_in) = model.dec_first()[i].backward_from_logits(&dec.tapes_first[i], dz);
        d_y += &d_in.expect("dense input");
        grads_first.push(grads);
    }

    // back through the sphere projection; the superposition sum fans the
    // same gradient out to every encoder
    let d_pre = normalize_rows_vjp(&enc.pre_sum, &d_y);
    let mut grads = Vec::with_capacity(model.mlp_count());
    for (l, encoder) in model.encoders().iter().enumerate() {
        let (g, _) = encoder.backward(&enc.tapes[l], &d_pre);
        grads.push(g);
    }
    grads.extend(grads_first);
    grads.extend(grads_second);

    Ok(StepOutput { loss, grads })
}
