//! Dense feed-forward networks with explicit tapes and exact backprop.
//!
//! Shapes: weights are `fan_in x fan_out`, batches are `batch x fan_in`
//! row-major. Shape mismatches and stale tapes are programmer errors and
//! panic; data-dependent failures return `Result`.

use ndarray::{Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};

use super::loss::{softmax, softmax_vjp};
use super::Scalar;
use crate::channel::stream_rng;
use crate::{Error, Result};

/// Per-layer activation. Softmax is only valid as the final activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation `{other}` (expected relu|linear|softmax)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
            Activation::Softmax => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Linear),
            2 => Ok(Activation::Softmax),
            other => Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        }
    }
}

/// One dense layer: `y = act(x W + b)` with `W` of shape `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T: Scalar> {
    weights: Array2<T>,
    bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::InvalidConfig(format!(
                "bias length {} does not match fan_out {}",
                bias.len(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig(
                "layer parameters must be finite".to_owned(),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    /// Mutation is reserved for the optimizer; go through
    /// [`Mlp::apply_update`] so the tape version advances.
    pub(crate) fn weights_mut(&mut self) -> &mut Array2<T> {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut Array1<T> {
        &mut self.bias
    }
}

/// Layer-0 input as recorded on the tape. One-hot batches skip the first
/// matmul in both directions.
#[derive(Debug, Clone)]
pub enum TapeInput<T: Scalar> {
    Dense(Array2<T>),
    OneHot { indices: Vec<usize>, width: usize },
}

impl<T: Scalar> TapeInput<T> {
    fn batch(&self) -> usize {
        match self {
            TapeInput::Dense(x) => x.nrows(),
            TapeInput::OneHot { indices, .. } => indices.len(),
        }
    }

    fn width(&self) -> usize {
        match self {
            TapeInput::Dense(x) => x.ncols(),
            TapeInput::OneHot { width, .. } => *width,
        }
    }
}

/// Cached activations from one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchTape<T: Scalar> {
    input: TapeInput<T>,
    /// Post-activation output of every layer, in order.
    post: Vec<Array2<T>>,
    /// Pre-activation of the final layer when it is softmax (needed for the
    /// numerically stable fused cross-entropy path); `None` otherwise.
    final_pre: Option<Array2<T>>,
    version: u64,
}

impl<T: Scalar> BatchTape<T> {
    /// Post-activation network output.
    pub fn output(&self) -> &Array2<T> {
        self.post.last().expect("tape has at least one layer")
    }

    /// Final-layer pre-activations (equals `output` for a linear head).
    pub fn logits(&self) -> &Array2<T> {
        self.final_pre.as_ref().unwrap_or_else(|| self.output())
    }

    pub fn batch(&self) -> usize {
        self.input.batch()
    }
}

/// Per-parameter gradients (or any value mirroring an [`Mlp`]'s shapes).
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar> {
    pub weights: Vec<Array2<T>>,
    pub bias: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            bias: mlp
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    /// `self += other * scale`, shapes must match.
    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        assert_eq!(self.weights.len(), other.weights.len(), "layer count mismatch");
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.zip_mut_with(b, |x, &y| *x = *x + y * scale);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.zip_mut_with(b, |x, &y| *x = *x + y * scale);
        }
    }

    pub fn is_all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.bias.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// A multilayer perceptron: a chain of dense layers with per-layer
/// activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar> {
    layers: Vec<DenseLayer<T>>,
    activations: Vec<Activation>,
    /// Bumped on every parameter mutation; tapes record it so a backward
    /// pass against updated parameters is caught.
    version: u64,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`), zero
    /// biases, deterministic in `seed`.
    pub fn init(shape: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::InvalidConfig(
                "MLP shape needs at least input and output sizes".to_owned(),
            ));
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".to_owned()));
        }
        if activations.len() != shape.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "{} activations for {} layers",
                activations.len(),
                shape.len() - 1
            )));
        }
        let mut rng = stream_rng(seed, 0);
        let mut layers = Vec::with_capacity(shape.len() - 1);
        for w in shape.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = T::from_f64((6.0 / (fan_in + fan_out) as f64).sqrt());
            let dist = Uniform::new(-bound, bound).expect("valid uniform bounds");
            let weights =
                Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng));
            layers.push(DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            });
        }
        Self::from_parts(layers, activations.to_vec())
    }

    /// Assembles an MLP from existing layers (checkpoint loading).
    pub fn from_parts(layers: Vec<DenseLayer<T>>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("MLP needs at least one layer".to_owned()));
        }
        if activations.len() != layers.len() {
            return Err(Error::InvalidConfig(format!(
                "{} activations for {} layers",
                activations.len(),
                layers.len()
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::InvalidConfig(format!(
                    "layer shapes do not chain: {} -> {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                )));
            }
        }
        if activations[..activations.len() - 1].contains(&Activation::Softmax) {
            return Err(Error::InvalidConfig(
                "softmax is only valid as the final activation".to_owned(),
            ));
        }
        Ok(Self {
            layers,
            activations,
            version: 0,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat parameter accessor: all weights (row-major) then the bias of
    /// each layer, in layer order. Used by serialization and the
    /// finite-difference tests.
    pub fn param(&self, index: usize) -> T {
        let mut i = index;
        for l in &self.layers {
            if i < l.weights.len() {
                return *l.weights.as_slice().unwrap().get(i).unwrap();
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: T) {
        self.version += 1;
        let mut i = index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                l.weights.as_slice_mut().unwrap()[i] = value;
                return;
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                l.bias[i] = value;
                return;
            }
            i -= l.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub(crate) fn apply_update(&mut self, f: impl FnOnce(&mut [DenseLayer<T>])) {
        self.version += 1;
        f(&mut self.layers);
    }

    /// Forward over a dense batch, recording a tape.
    pub fn forward(&self, batch: &Array2<T>) -> (Array2<T>, BatchTape<T>) {
        assert_eq!(
            batch.ncols(),
            self.fan_in(),
            "batch width {} != fan_in {}",
            batch.ncols(),
            self.fan_in()
        );
        self.forward_input(TapeInput::Dense(batch.clone()))
    }

    /// Forward where each input row is one-hot `e_i`. The first matmul is a
    /// row gather of the first weight matrix.
    pub fn forward_one_hot(&self, indices: &[usize]) -> (Array2<T>, BatchTape<T>) {
        assert!(
            indices.iter().all(|&i| i < self.fan_in()),
            "one-hot index out of range for fan_in {}",
            self.fan_in()
        );
        self.forward_input(TapeInput::OneHot {
            indices: indices.to_vec(),
            width: self.fan_in(),
        })
    }

    /// Forward without recording a tape (inference only).
    pub fn infer(&self, batch: &Array2<T>) -> Array2<T> {
        let (out, _) = self.forward(batch);
        out
    }

    pub fn infer_one_hot(&self, indices: &[usize]) -> Array2<T> {
        let (out, _) = self.forward_one_hot(indices);
        out
    }

    fn forward_input(&self, input: TapeInput<T>) -> (Array2<T>, BatchTape<T>) {
        let mut post: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        let mut final_pre = None;
        for (li, (layer, act)) in self.layers.iter().zip(&self.activations).enumerate() {
            let mut z = if li == 0 {
                match &input {
                    TapeInput::Dense(x) => {
                        assert!(
                            x.iter().all(|v| v.is_finite()),
                            "non-finite input to forward"
                        );
                        let mut z = x.dot(&layer.weights);
                        z += &layer.bias;
                        z
                    }
                    TapeInput::OneHot { indices, .. } => {
                        let mut z = Array2::zeros((indices.len(), layer.fan_out()));
                        for (mut row, &idx) in z.rows_mut().into_iter().zip(indices) {
                            row.assign(&layer.weights.row(idx));
                        }
                        z += &layer.bias;
                        z
                    }
                }
            } else {
                let mut z = post[li - 1].dot(&layer.weights);
                z += &layer.bias;
                z
            };
            match act {
                Activation::Relu => z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() }),
                Activation::Linear => {}
                Activation::Softmax => {
                    let probs = softmax(&z);
                    final_pre = Some(z);
                    post.push(probs);
                    continue;
                }
            }
            post.push(z);
        }
        let output = post.last().unwrap().clone();
        (
            output,
            BatchTape {
                input,
                post,
                final_pre,
                version: self.version,
            },
        )
    }

    /// Backward pass from a gradient w.r.t. the post-activation outputs.
    ///
    /// Returns parameter gradients and, for dense inputs, the gradient
    /// w.r.t. the input batch (`None` for one-hot inputs, which carry no
    /// useful input gradient).
    pub fn backward(
        &self,
        tape: &BatchTape<T>,
        d_output: &Array2<T>,
    ) -> (Gradients<T>, Option<Array2<T>>) {
        let last = self.layers.len() - 1;
        let d_last = match self.activations[last] {
            Activation::Softmax => softmax_vjp(&tape.post[last], d_output),
            Activation::Relu => relu_vjp(&tape.post[last], d_output),
            Activation::Linear => d_output.clone(),
        };
        self.backprop(tape, d_last)
    }

    /// Backward pass from a gradient w.r.t. the final-layer pre-activations
    /// (the fused softmax + cross-entropy path).
    pub fn backward_from_logits(
        &self,
        tape: &BatchTape<T>,
        d_logits: Array2<T>,
    ) -> (Gradients<T>, Option<Array2<T>>) {
        self.backprop(tape, d_logits)
    }

    fn backprop(&self, tape: &BatchTape<T>, d_last: Array2<T>) -> (Gradients<T>, Option<Array2<T>>) {
        assert_eq!(
            tape.version, self.version,
            "stale tape: parameters changed since forward"
        );
        assert_eq!(tape.post.len(), self.layers.len(), "tape/model layer mismatch");
        assert_eq!(tape.input.width(), self.fan_in(), "tape input width mismatch");
        assert_eq!(
            d_last.dim(),
            (tape.batch(), self.fan_out()),
            "upstream gradient shape mismatch"
        );

        let mut grads = Gradients {
            weights: Vec::with_capacity(self.layers.len()),
            bias: Vec::with_capacity(self.layers.len()),
        };
        let mut dz = d_last;
        let mut d_input = None;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            grads.bias.push(dz.sum_axis(Axis(0)));
            if li > 0 {
                grads.weights.push(tape.post[li - 1].t().dot(&dz));
                let d_prev = dz.dot(&layer.weights.t());
                dz = match self.activations[li - 1] {
                    Activation::Relu => relu_vjp(&tape.post[li - 1], &d_prev),
                    Activation::Linear => d_prev,
                    Activation::Softmax => unreachable!("softmax is final-only"),
                };
            } else {
                match &tape.input {
                    TapeInput::Dense(x) => {
                        grads.weights.push(x.t().dot(&dz));
                        d_input = Some(dz.dot(&layer.weights.t()));
                    }
                    TapeInput::OneHot { indices, width } => {
                        let mut dw = Array2::zeros((*width, layer.fan_out()));
                        for (row, &idx) in dz.rows().into_iter().zip(indices) {
                            let mut target = dw.row_mut(idx);
                            target += &row;
                        }
                        grads.weights.push(dw);
                    }
                }
            }
        }
        grads.weights.reverse();
        grads.bias.reverse();
        (grads, d_input)
    }
}

fn relu_vjp<T: Scalar>(post: &Array2<T>, upstream: &Array2<T>) -> Array2<T> {
    let mut out = upstream.clone();
    out.zip_mut_with(post, |g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::stream_rng;
    use ndarray::arr2;
    use rand::Rng;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, 9);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::<f32>::init(&[128, 128, 72], &[Activation::Relu, Activation::Linear], 7)
            .unwrap();
        let b = Mlp::<f32>::init(&[128, 128, 72], &[Activation::Relu, Activation::Linear], 7)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_respects_glorot_bound_and_zero_bias() {
        let mlp = Mlp::<f64>::init(&[4, 3], &[Activation::Linear], 3).unwrap();
        let bound = (6.0 / 7.0_f64).sqrt();
        for &w in mlp.layers()[0].weights() {
            assert!(w.abs() <= bound, "|{w}| > {bound}");
        }
        assert!(mlp.layers()[0].bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn param_count_matches_direct_count() {
        let mlp = Mlp::<f32>::init(
            &[128, 128, 128],
            &[Activation::Relu, Activation::Linear],
            0,
        )
        .unwrap();
        assert_eq!(mlp.param_count(), 128 * 128 + 128 + 128 * 128 + 128);
        assert_eq!(mlp.param_count(), 33_024);
    }

    #[test]
    fn zero_weights_linear_forward_is_zero() {
        let layers = vec![DenseLayer::new(Array2::zeros((5, 4)), Array1::zeros(4)).unwrap()];
        let mlp = Mlp::from_parts(layers, vec![Activation::Linear]).unwrap();
        let (out, _) = mlp.forward(&random_batch(6, 5, 1));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_output_rows_sum_to_one() {
        let mlp = Mlp::<f64>::init(&[5, 8, 4], &[Activation::Relu, Activation::Softmax], 11)
            .unwrap();
        let (out, _) = mlp.forward(&random_batch(7, 5, 2));
        for row in out.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    // Independent oracle: naive triple-loop affine chain.
    #[test]
    fn forward_matches_hand_rolled_matmul() {
        let mlp =
            Mlp::<f64>::init(&[6, 5, 3], &[Activation::Relu, Activation::Linear], 21).unwrap();
        let x = random_batch(4, 6, 3);
        let (out, _) = mlp.forward(&x);

        let mut cur: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        for (li, layer) in mlp.layers().iter().enumerate() {
            let mut next = vec![vec![0.0; layer.fan_out()]; cur.len()];
            for (s, row) in cur.iter().enumerate() {
                for o in 0..layer.fan_out() {
                    let mut acc = layer.bias()[o];
                    for (i, &xi) in row.iter().enumerate() {
                        acc += xi * layer.weights()[(i, o)];
                    }
                    if mlp.activations()[li] == Activation::Relu && acc < 0.0 {
                        acc = 0.0;
                    }
                    next[s][o] = acc;
                }
            }
            cur = next;
        }
        for (s, row) in cur.iter().enumerate() {
            for (o, &v) in row.iter().enumerate() {
                let got = out[(s, o)];
                let rel = (got - v).abs() / v.abs().max(1e-30);
                assert!(rel < 1e-12, "({s},{o}): {got} vs {v}");
            }
        }
    }

    #[test]
    fn one_hot_forward_matches_dense_forward() {
        let mlp =
            Mlp::<f64>::init(&[8, 6, 4], &[Activation::Relu, Activation::Softmax], 5).unwrap();
        let indices = [3usize, 0, 7, 7, 2];
        let mut dense = Array2::zeros((indices.len(), 8));
        for (r, &i) in indices.iter().enumerate() {
            dense[(r, i)] = 1.0;
        }
        let (a, _) = mlp.forward_one_hot(&indices);
        let (b, _) = mlp.forward(&dense);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_param_grads() {
        let mlp =
            Mlp::<f64>::init(&[5, 4, 3], &[Activation::Relu, Activation::Linear], 13).unwrap();
        let (_, tape) = mlp.forward(&random_batch(6, 5, 4));
        let (grads, d_in) = mlp.backward(&tape, &Array2::zeros((6, 3)));
        assert!(grads.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(grads.bias.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(d_in.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_backward_matches_dense_backward() {
        let mlp =
            Mlp::<f64>::init(&[8, 6, 4], &[Activation::Relu, Activation::Linear], 17).unwrap();
        let indices = [1usize, 5, 5, 0];
        let mut dense = Array2::zeros((indices.len(), 8));
        for (r, &i) in indices.iter().enumerate() {
            dense[(r, i)] = 1.0;
        }
        let up = random_batch(4, 4, 5);
        let (_, t1) = mlp.forward_one_hot(&indices);
        let (_, t2) = mlp.forward(&dense);
        let (g1, d1) = mlp.backward(&t1, &up);
        let (g2, d2) = mlp.backward(&t2, &up);
        assert!(d1.is_none() && d2.is_some());
        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    #[should_panic(expected = "stale tape")]
    fn backward_panics_on_stale_tape() {
        let mut mlp = Mlp::<f64>::init(&[3, 2], &[Activation::Linear], 1).unwrap();
        let (_, tape) = mlp.forward(&random_batch(2, 3, 6));
        mlp.set_param(0, 1.0);
        let _ = mlp.backward(&tape, &Array2::zeros((2, 2)));
    }

    #[test]
    #[should_panic(expected = "batch width")]
    fn forward_panics_on_width_mismatch() {
        let mlp = Mlp::<f64>::init(&[3, 2], &[Activation::Linear], 1).unwrap();
        let _ = mlp.forward(&arr2(&[[1.0, 2.0]]));
    }

    #[test]
    fn normalization_invariance_forward_is_pure() {
        let mlp =
            Mlp::<f64>::init(&[5, 4, 3], &[Activation::Relu, Activation::Softmax], 2).unwrap();
        let x = random_batch(3, 5, 7);
        let (a, _) = mlp.forward(&x);
        let (b, _) = mlp.forward(&x);
        assert_eq!(a, b);
    }
}
