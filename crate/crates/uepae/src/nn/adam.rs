//! Bias-corrected Adam.

use ndarray::{Array1, Array2};

use super::{Gradients, Mlp, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state for one [`Mlp`]: first/second-moment accumulators
/// mirroring the parameter shapes, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    first_moment: Gradients<T>,
    second_moment: Gradients<T>,
    step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(mlp: &Mlp<T>, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: Gradients::zeros_like(mlp),
            second_moment: Gradients::zeros_like(mlp),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One Adam update: `m,v` are updated in place, parameters move by
/// `-lr * m_hat / (sqrt(v_hat) + eps)`, and the step count increments.
///
/// Non-finite gradient entries reject the whole update and leave both the
/// parameters and the optimizer state untouched, signalling divergence to
/// the caller.
pub fn adam_step<T: Scalar>(
    mlp: &mut Mlp<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    if !grads.is_all_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let t = state.step_count + 1;
    let cfg = state.config;
    let lr = T::from_f64(cfg.lr);
    let beta1 = T::from_f64(cfg.beta1);
    let beta2 = T::from_f64(cfg.beta2);
    let eps = T::from_f64(cfg.epsilon);
    let bc1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));

    mlp.apply_update(|layers| {
        assert_eq!(layers.len(), grads.weights.len(), "gradient layer count mismatch");
        for (li, layer) in layers.iter_mut().enumerate() {
            update_tensor2(
                layer.weights_mut(),
                &grads.weights[li],
                &mut state.first_moment.weights[li],
                &mut state.second_moment.weights[li],
                lr, beta1, beta2, eps, bc1, bc2,
            );
            update_tensor1(
                layer.bias_mut(),
                &grads.bias[li],
                &mut state.first_moment.bias[li],
                &mut state.second_moment.bias[li],
                lr, beta1, beta2, eps, bc1, bc2,
            );
        }
    });
    state.step_count = t;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_tensor2<T: Scalar>(
    param: &mut Array2<T>,
    grad: &Array2<T>,
    m: &mut Array2<T>,
    v: &mut Array2<T>,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    bc1: T,
    bc2: T,
) {
    assert_eq!(param.dim(), grad.dim(), "gradient shape mismatch");
    let one = T::one();
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = beta1 * *m + (one - beta1) * g;
        *v = beta2 * *v + (one - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor1<T: Scalar>(
    param: &mut Array1<T>,
    grad: &Array1<T>,
    m: &mut Array1<T>,
    v: &mut Array1<T>,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    bc1: T,
    bc2: T,
) {
    assert_eq!(param.dim(), grad.dim(), "gradient shape mismatch");
    let one = T::one();
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad.iter())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = beta1 * *m + (one - beta1) * g;
        *v = beta2 * *v + (one - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn tiny_mlp(seed: u64) -> Mlp<f64> {
        Mlp::init(&[3, 2], &[Activation::Linear], seed).unwrap()
    }

    fn constant_grads(mlp: &Mlp<f64>, value: f64) -> Gradients<f64> {
        let mut g = Gradients::zeros_like(mlp);
        for w in &mut g.weights {
            w.fill(value);
        }
        for b in &mut g.bias {
            b.fill(value);
        }
        g
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut mlp = tiny_mlp(1);
        let before: Vec<f64> = (0..mlp.param_count()).map(|i| mlp.param(i)).collect();
        let mut state = AdamState::new(&mlp, AdamConfig::new(0.01));
        let grads = constant_grads(&mlp, 0.5);
        adam_step(&mut mlp, &grads, &mut state).unwrap();
        for (i, &b) in before.iter().enumerate() {
            let moved = mlp.param(i) - b;
            let expected = -0.01 * 0.5 / (0.5 + 1e-8);
            assert!((moved - expected).abs() < 1e-12, "param {i}: {moved}");
        }
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut mlp = tiny_mlp(2);
        let before = mlp.clone();
        let mut state = AdamState::new(&mlp, AdamConfig::new(0.1));
        let grads = constant_grads(&mlp, 0.0);
        for _ in 0..25 {
            adam_step(&mut mlp, &grads, &mut state).unwrap();
        }
        assert_eq!(mlp.layers()[0].weights(), before.layers()[0].weights());
    }

    #[test]
    fn zero_lr_is_bitwise_noop() {
        let mut mlp = tiny_mlp(3);
        let before = mlp.clone();
        let mut state = AdamState::new(&mlp, AdamConfig::new(0.0));
        let grads = constant_grads(&mlp, 0.7);
        adam_step(&mut mlp, &grads, &mut state).unwrap();
        assert_eq!(mlp.layers()[0].weights(), before.layers()[0].weights());
        assert_eq!(mlp.layers()[0].bias(), before.layers()[0].bias());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut mlp = tiny_mlp(4);
        let before = mlp.clone();
        let mut state = AdamState::new(&mlp, AdamConfig::new(0.1));
        let grads = constant_grads(&mlp, f64::NAN);
        let err = adam_step(&mut mlp, &grads, &mut state);
        assert!(matches!(err, Err(Error::NonFiniteGradient)));
        assert_eq!(mlp.layers()[0].weights(), before.layers()[0].weights());
        assert_eq!(state.step_count(), 0);
    }

    // Scalar reimplementation oracle: minimize f(theta) = theta^2 from
    // theta = 1 with lr = 0.1 and compare the trajectory elementwise.
    #[test]
    fn matches_scalar_adam_oracle_on_quadratic() {
        let layers = vec![super::super::DenseLayer::new(
            ndarray::arr2(&[[1.0_f64]]),
            ndarray::Array1::zeros(1),
        )
        .unwrap()];
        let mut mlp = Mlp::from_parts(layers, vec![Activation::Linear]).unwrap();
        let mut state = AdamState::new(&mlp, AdamConfig::new(0.1));

        let (mut theta, mut m, mut v) = (1.0_f64, 0.0_f64, 0.0_f64);
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        for t in 1..=100 {
            let g = 2.0 * mlp.param(0);
            let mut grads = Gradients::zeros_like(&mlp);
            grads.weights[0][(0, 0)] = g;
            adam_step(&mut mlp, &grads, &mut state).unwrap();

            let g_ref = 2.0 * theta;
            m = b1 * m + (1.0 - b1) * g_ref;
            v = b2 * v + (1.0 - b2) * g_ref * g_ref;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);

            let got = mlp.param(0);
            let rel = (got - theta).abs() / theta.abs().max(1e-30);
            assert!(rel < 1e-10, "step {t}: {got} vs {theta}");
        }
        assert!(mlp.param(0).abs() < 0.05, "theta = {}", mlp.param(0));
    }
}
