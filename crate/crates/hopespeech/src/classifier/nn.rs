//! Small neural-network primitives with explicit backward passes.
//!
//! Everything is f64 and CPU-only: the model sizes this crate trains are
//! tiny, and double precision keeps the gradient checks and determinism
//! contracts honest. Each building block exposes a forward function and
//! a matching backward that accumulates parameter gradients and returns
//! the gradient with respect to its input.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Standard deviation used for fresh weight initialization.
pub const INIT_STD: f64 = 0.02;

/// A 2-D parameter with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param2 {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param2 {
    /// Normal(0, `INIT_STD`) initialization.
    pub fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, INIT_STD).expect("valid normal");
        Self {
            value: Array2::from_shape_fn((rows, cols), |_| dist.sample(rng)),
            grad: Array2::zeros((rows, cols)),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            value: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// A 1-D parameter with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param1 {
    pub value: Array1<f64>,
    pub grad: Array1<f64>,
}

impl Param1 {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: Array1::zeros(n),
            grad: Array1::zeros(n),
        }
    }

    pub fn ones(n: usize) -> Self {
        Self {
            value: Array1::ones(n),
            grad: Array1::zeros(n),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// A borrowed view of one named parameter during model traversal. The
/// distinction between matrices and vectors matters to optimizers:
/// weight decay applies to matrices only, never to biases or norms.
pub enum ParamRef<'a> {
    Matrix {
        name: String,
        value: &'a mut Array2<f64>,
        grad: &'a mut Array2<f64>,
    },
    Vector {
        name: String,
        value: &'a mut Array1<f64>,
        grad: &'a mut Array1<f64>,
    },
}

impl ParamRef<'_> {
    pub fn name(&self) -> &str {
        match self {
            ParamRef::Matrix { name, .. } | ParamRef::Vector { name, .. } => name,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            ParamRef::Matrix { value, .. } => vec![value.nrows(), value.ncols()],
            ParamRef::Vector { value, .. } => vec![value.len()],
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, ParamRef::Matrix { .. })
    }

    pub fn value_slice(&self) -> &[f64] {
        match self {
            ParamRef::Matrix { value, .. } => value.as_slice().expect("standard layout"),
            ParamRef::Vector { value, .. } => value.as_slice().expect("standard layout"),
        }
    }

    pub fn value_slice_mut(&mut self) -> &mut [f64] {
        match self {
            ParamRef::Matrix { value, .. } => value.as_slice_mut().expect("standard layout"),
            ParamRef::Vector { value, .. } => value.as_slice_mut().expect("standard layout"),
        }
    }

    pub fn grad_slice(&self) -> &[f64] {
        match self {
            ParamRef::Matrix { grad, .. } => grad.as_slice().expect("standard layout"),
            ParamRef::Vector { grad, .. } => grad.as_slice().expect("standard layout"),
        }
    }

    pub fn grad_slice_mut(&mut self) -> &mut [f64] {
        match self {
            ParamRef::Matrix { grad, .. } => grad.as_slice_mut().expect("standard layout"),
            ParamRef::Vector { grad, .. } => grad.as_slice_mut().expect("standard layout"),
        }
    }
}

/// Dense layer `y = x W + b` with weight shape `[input, output]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param2,
    pub bias: Param1,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param2::randn(input, output, rng),
            bias: Param1::zeros(output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Param2::zeros(input, output),
            bias: Param1::zeros(output),
        }
    }

    /// `x: [n, input] -> [n, output]`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value) + &self.bias.value
    }

    /// Accumulates weight/bias gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.weight.grad += &x.t().dot(dy);
        self.bias.grad += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.value.t())
    }

    /// Feeds this layer's weight and bias to a parameter visitor.
    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef)) {
        f(ParamRef::Matrix {
            name: format!("{prefix}.weight"),
            value: &mut self.weight.value,
            grad: &mut self.weight.grad,
        });
        f(ParamRef::Vector {
            name: format!("{prefix}.bias"),
            value: &mut self.bias.value,
            grad: &mut self.bias.grad,
        });
    }
}

/// Per-row statistics saved by the layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Layer normalization over the last axis with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param1,
    pub beta: Param1,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Param1::ones(width),
            beta: Param1::zeros(width),
            eps: 1e-5,
        }
    }

    /// Normalizes each row of `x: [n, width]`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let n = x.nrows();
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(n);
        for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
            let mean = row.mean().expect("non-empty row");
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
            let s = 1.0 / (var + self.eps).sqrt();
            row *= s;
            inv_std[i] = s;
        }
        let y = &xhat * &self.gamma.value + &self.beta.value;
        (y, LnCache { xhat, inv_std })
    }

    /// Accumulates gamma/beta gradients and returns `dL/dx`.
    pub fn backward(&mut self, cache: &LnCache, dy: &Array2<f64>) -> Array2<f64> {
        self.gamma.grad += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0));
        let dim = dy.ncols() as f64;
        let dxhat = dy * &self.gamma.value;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let dxh = dxhat.row(i);
            let xh = cache.xhat.row(i);
            let mean_dxh = dxh.sum() / dim;
            let mean_dxh_xh = dxh.dot(&xh) / dim;
            let s = cache.inv_std[i];
            for j in 0..dy.ncols() {
                dx[[i, j]] = s * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
        dx
    }

    /// Feeds gamma and beta to a parameter visitor.
    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamRef)) {
        f(ParamRef::Vector {
            name: format!("{prefix}.gamma"),
            value: &mut self.gamma.value,
            grad: &mut self.gamma.grad,
        });
        f(ParamRef::Vector {
            name: format!("{prefix}.beta"),
            value: &mut self.beta.value,
            grad: &mut self.beta.grad,
        });
    }
}

/// Exact GELU: `0.5 x (1 + erf(x / sqrt(2)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Derivative of the exact GELU.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable softmax applied to each row in place.
pub fn softmax_rows_inplace(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row /= sum;
    }
}

/// Stable softmax, returning a fresh array.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    softmax_rows_inplace(&mut y);
    y
}

/// Backward through a row-wise softmax: given the softmax output `a` and
/// the upstream gradient `da`, returns the gradient on the logits.
pub fn softmax_backward(a: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let mut ds = a * da;
    for i in 0..a.nrows() {
        let dot: f64 = ds.row(i).sum();
        for j in 0..a.ncols() {
            ds[[i, j]] -= a[[i, j]] * dot;
        }
    }
    ds
}

/// Inverted dropout: zeroes entries with probability `rate` and scales
/// survivors by `1 / (1 - rate)`, so eval mode needs no rescaling. The
/// returned mask already carries the scale; backward is `dy * mask`.
/// A rate of exactly 0 draws nothing from the stream.
pub fn dropout(x: &Array2<f64>, rate: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
    if rate == 0.0 {
        return (x.clone(), Array2::ones(x.raw_dim()));
    }
    use rand::Rng;
    let keep = 1.0 - rate;
    let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
        if rng.gen::<f64>() < rate {
            0.0
        } else {
            1.0 / keep
        }
    });
    (x * &mask, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Central finite difference of a scalar function at x.
    fn numeric_grad(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn linear_forward_matches_hand_computation() {
        let mut lin = Linear::zeros(2, 2);
        lin.weight.value = array![[1.0, 2.0], [3.0, 4.0]];
        lin.bias.value = array![0.5, -0.5];
        let y = lin.forward(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[4.5, 5.5]]);
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut lin = Linear::new(3, 2, &mut rng(7));
        let x = array![[0.3, -1.2, 0.7], [1.1, 0.2, -0.4]];
        // Scalar objective: sum of outputs.
        let dy = Array2::ones((2, 2));
        let dx = lin.backward(&x, &dy);
        for (r, c) in [(0usize, 0usize), (1, 2), (0, 1)] {
            let num = numeric_grad(
                |v| {
                    let mut x2 = x.clone();
                    x2[[r, c]] = v;
                    lin.forward(&x2).sum()
                },
                x[[r, c]],
            );
            assert!((dx[[r, c]] - num).abs() < 1e-7);
        }
        for (r, c) in [(0usize, 0usize), (2, 1)] {
            let base = lin.weight.value[[r, c]];
            let num = numeric_grad(
                |v| {
                    let mut l2 = lin.clone();
                    l2.weight.value[[r, c]] = v;
                    l2.forward(&x).sum()
                },
                base,
            );
            assert!((lin.weight.grad[[r, c]] - num).abs() < 1e-7);
        }
    }

    #[test]
    fn layernorm_forward_normalizes_rows() {
        let ln = LayerNorm::new(4);
        let x = array![[1.0, 2.0, 3.0, 4.0], [-5.0, 0.0, 5.0, 10.0]];
        let (y, _) = ln.forward(&x);
        for row in y.rows() {
            let mean: f64 = row.sum() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn layernorm_backward_matches_finite_differences() {
        let mut ln = LayerNorm::new(3);
        ln.gamma.value = array![1.2, 0.8, -0.5];
        ln.beta.value = array![0.1, 0.0, -0.2];
        let x = array![[0.4, -0.9, 1.7], [2.0, 2.1, 1.9]];
        // Objective: weighted sum to give asymmetric upstream gradients.
        let dy = array![[1.0, -2.0, 0.5], [0.3, 0.7, -1.1]];
        let objective = |ln: &LayerNorm, x: &Array2<f64>| (ln.forward(x).0 * &dy).sum();
        let (_, cache) = ln.forward(&x);
        let dx = ln.backward(&cache, &dy);
        for (r, c) in [(0usize, 0usize), (0, 2), (1, 1)] {
            let num = numeric_grad(
                |v| {
                    let mut x2 = x.clone();
                    x2[[r, c]] = v;
                    objective(&ln, &x2)
                },
                x[[r, c]],
            );
            assert!(
                (dx[[r, c]] - num).abs() < 1e-6,
                "dx[{r},{c}] analytic {} vs numeric {num}",
                dx[[r, c]]
            );
        }
        for j in 0..3 {
            let num = numeric_grad(
                |v| {
                    let mut l2 = ln.clone();
                    l2.gamma.value[j] = v;
                    objective(&l2, &x)
                },
                ln.gamma.value[j],
            );
            assert!((ln.gamma.grad[j] - num).abs() < 1e-6);
        }
    }

    #[test]
    fn gelu_matches_known_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_655_253_931_457_05).abs() < 1e-12);
        // Derivative against finite differences on a grid.
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.2] {
            let num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((gelu_grad(x) - num).abs() < 1e-8);
        }
    }

    #[test]
    fn relu_and_grad() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.5), 3.5);
        assert_eq!(relu_grad(-2.0), 0.0);
        assert_eq!(relu_grad(3.5), 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_handle_neg_infinity() {
        let mut x = array![[1.0, 2.0, 3.0], [f64::NEG_INFINITY, 0.0, 0.0]];
        softmax_rows_inplace(&mut x);
        for row in x.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(x[[1, 0]], 0.0);
        assert!((x[[1, 1]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let logits = array![[0.2, -1.3, 0.8]];
        let dy = array![[1.0, 0.5, -0.7]];
        let a = softmax_rows(&logits);
        let ds = softmax_backward(&a, &dy);
        for j in 0..3 {
            let num = numeric_grad(
                |v| {
                    let mut l2 = logits.clone();
                    l2[[0, j]] = v;
                    (softmax_rows(&l2) * &dy).sum()
                },
                logits[[0, j]],
            );
            assert!((ds[[0, j]] - num).abs() < 1e-7);
        }
    }

    #[test]
    fn dropout_scales_survivors_and_is_identity_at_zero() {
        let x = Array2::ones((4, 8));
        let (y, mask) = dropout(&x, 0.0, &mut rng(1));
        assert_eq!(y, x);
        assert_eq!(mask, Array2::<f64>::ones((4, 8)));

        let (y, mask) = dropout(&x, 0.5, &mut rng(1));
        for (&v, &m) in y.iter().zip(mask.iter()) {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
            assert_eq!(v, m);
        }
        // Same seed, same mask.
        let (y2, _) = dropout(&x, 0.5, &mut rng(1));
        assert_eq!(y, y2);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Param2::randn(4, 4, &mut rng(9));
        let b = Param2::randn(4, 4, &mut rng(9));
        let c = Param2::randn(4, 4, &mut rng(10));
        assert_eq!(a.value, b.value);
        assert_ne!(a.value, c.value);
    }
}
