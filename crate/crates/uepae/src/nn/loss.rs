//! Softmax, cross-entropy, and their gradients.
//!
//! Two routes are provided: the plain probability-space ops matching their
//! textbook definitions, and fused logit-space ops (log-sum-exp) that the
//! training loop uses so finite logits can never produce a zero probability.

use ndarray::{Array1, Array2};

use super::Scalar;
use crate::{Error, Result};

/// Row-wise softmax with max-subtraction.
pub fn softmax<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|z| (z - m).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    out
}

/// Row-wise `log(sum(exp(z)))`.
pub fn log_sum_exp_rows<T: Scalar>(logits: &Array2<T>) -> Array1<T> {
    Array1::from_iter(logits.rows().into_iter().map(|row| {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let s: T = row.iter().map(|&z| (z - m).exp()).sum();
        m + s.ln()
    }))
}

/// Softmax Jacobian-transpose product, row-wise:
/// `dz = p * (g - <p, g>)`.
pub fn softmax_vjp<T: Scalar>(probs: &Array2<T>, upstream: &Array2<T>) -> Array2<T> {
    assert_eq!(probs.dim(), upstream.dim(), "softmax vjp shape mismatch");
    let mut out = upstream.clone();
    for (mut g, p) in out.rows_mut().into_iter().zip(probs.rows()) {
        let dot: T = g.iter().zip(p.iter()).map(|(&a, &b)| a * b).sum();
        for (gi, &pi) in g.iter_mut().zip(p.iter()) {
            *gi = pi * (*gi - dot);
        }
    }
    out
}

/// Batch-mean cross-entropy `-sum_i u_i log b_i` over probability rows.
///
/// Targets may be one-hot or multi-hot. Errors if any probability entry is
/// not strictly positive; use the logit-space variants in training paths.
pub fn cross_entropy<T: Scalar>(targets: &Array2<T>, probs: &Array2<T>) -> Result<T> {
    assert_eq!(targets.dim(), probs.dim(), "cross-entropy shape mismatch");
    if probs.iter().any(|&p| p <= T::zero()) {
        return Err(Error::NonPositiveProbability);
    }
    let total: T = targets
        .iter()
        .zip(probs.iter())
        .map(|(&u, &b)| if u == T::zero() { T::zero() } else { -u * b.ln() })
        .sum();
    Ok(total / T::from_f64(targets.nrows() as f64))
}

/// Batch-mean cross-entropy computed directly from logits:
/// `sum(u) * lse(z) - <u, z>` per row. Stable for any finite logits.
pub fn cross_entropy_from_logits<T: Scalar>(targets: &Array2<T>, logits: &Array2<T>) -> T {
    assert_eq!(targets.dim(), logits.dim(), "cross-entropy shape mismatch");
    let lse = log_sum_exp_rows(logits);
    let mut total = T::zero();
    for ((u, z), &l) in targets.rows().into_iter().zip(logits.rows()).zip(&lse) {
        let mass: T = u.sum();
        let dot: T = u.iter().zip(z.iter()).map(|(&a, &b)| a * b).sum();
        total = total + mass * l - dot;
    }
    total / T::from_f64(targets.nrows() as f64)
}

/// One-hot fast path of [`cross_entropy_from_logits`].
pub fn cross_entropy_from_logits_onehot<T: Scalar>(target_idx: &[usize], logits: &Array2<T>) -> T {
    assert_eq!(target_idx.len(), logits.nrows(), "target count mismatch");
    let lse = log_sum_exp_rows(logits);
    let mut total = T::zero();
    for ((&idx, z), &l) in target_idx.iter().zip(logits.rows()).zip(&lse) {
        total = total + l - z[idx];
    }
    total / T::from_f64(target_idx.len() as f64)
}

/// Fused softmax + cross-entropy gradient at the logits for one-hot
/// targets: `scale * (probs - e_t)` per row.
pub fn softmax_ce_logit_grad<T: Scalar>(
    probs: &Array2<T>,
    target_idx: &[usize],
    scale: T,
) -> Array2<T> {
    assert_eq!(target_idx.len(), probs.nrows(), "target count mismatch");
    let mut out = probs.mapv(|p| p * scale);
    for (r, &idx) in target_idx.iter().enumerate() {
        out[(r, idx)] = out[(r, idx)] - scale;
    }
    out
}

/// Fused gradient for arbitrary (multi-hot) targets:
/// `scale * (sum(u) * probs - u)` per row.
pub fn softmax_ce_logit_grad_multi<T: Scalar>(
    probs: &Array2<T>,
    targets: &Array2<T>,
    scale: T,
) -> Array2<T> {
    assert_eq!(probs.dim(), targets.dim(), "target shape mismatch");
    let mut out = Array2::zeros(probs.raw_dim());
    for ((mut o, p), u) in out
        .rows_mut()
        .into_iter()
        .zip(probs.rows())
        .zip(targets.rows())
    {
        let mass: T = u.sum();
        for ((oi, &pi), &ui) in o.iter_mut().zip(p.iter()).zip(u.iter()) {
            *oi = scale * (mass * pi - ui);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let targets = arr2(&[[0.0, 0.0, 1.0]]);
        let probs = arr2(&[[0.0_f64, 0.0, 1.0]]);
        // probs contains zeros -> strict op refuses
        assert!(cross_entropy(&targets, &probs).is_err());
        let probs = arr2(&[[1e-12_f64, 1e-12, 1.0 - 2e-12]]);
        let loss = cross_entropy(&targets, &probs).unwrap();
        assert!(loss.abs() < 1e-11);
    }

    #[test]
    fn uniform_probs_give_log_m() {
        let m = 128;
        let targets = Array2::from_shape_fn((1, m), |(_, j)| if j == 2 { 1.0 } else { 0.0 });
        let probs = Array2::from_elem((1, m), 1.0 / m as f64);
        let loss = cross_entropy(&targets, &probs).unwrap();
        assert!((loss - 4.852030263919617).abs() < 1e-12, "loss = {loss}");
    }

    #[test]
    fn multi_hot_sums_per_one() {
        let targets = arr2(&[[1.0, 1.0, 0.0, 0.0]]);
        let probs = arr2(&[[0.5_f64, 0.5, 0.25, 0.25]]);
        // hand computation: -(log 0.5 + log 0.5)
        let loss = cross_entropy(&targets, &probs).unwrap();
        assert!((loss - 2.0 * 0.5_f64.ln().abs()).abs() < 1e-14);
    }

    #[test]
    fn logit_route_matches_probability_route() {
        let logits = arr2(&[[0.3_f64, -1.2, 2.0, 0.0], [-0.5, 0.5, 0.1, 1.4]]);
        let targets = arr2(&[[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        let probs = softmax(&logits);
        let a = cross_entropy(&targets, &probs).unwrap();
        let b = cross_entropy_from_logits(&targets, &logits);
        let c = cross_entropy_from_logits_onehot(&[1, 3], &logits);
        assert!((a - b).abs() < 1e-13);
        assert!((a - c).abs() < 1e-13);
    }

    #[test]
    fn fused_grad_is_probs_minus_targets() {
        let logits = arr2(&[[0.4_f64, -0.3, 1.1]]);
        let probs = softmax(&logits);
        let g = softmax_ce_logit_grad(&probs, &[2], 1.0);
        assert!((g[(0, 0)] - probs[(0, 0)]).abs() < 1e-15);
        assert!((g[(0, 2)] - (probs[(0, 2)] - 1.0)).abs() < 1e-15);
        // at a perfect prediction the gradient vanishes
        let hard = arr2(&[[0.0_f64, 0.0, 1.0]]);
        let g0 = softmax_ce_logit_grad_multi(&hard, &hard, 1.0);
        assert!(g0.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn softmax_vjp_matches_fused_grad_for_one_hot_ce() {
        // d/dz CE(softmax(z)) computed two ways: fused (p - u) and
        // probability-space gradient -u/p pushed through the softmax vjp.
        let logits = arr2(&[[0.9_f64, -0.2, 0.3, -1.0]]);
        let probs = softmax(&logits);
        let fused = softmax_ce_logit_grad(&probs, &[0], 1.0);
        let mut d_probs = Array2::zeros(probs.raw_dim());
        d_probs[(0, 0)] = -1.0 / probs[(0, 0)];
        let via_jacobian = softmax_vjp(&probs, &d_probs);
        for (a, b) in fused.iter().zip(via_jacobian.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
