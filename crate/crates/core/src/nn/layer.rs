use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b` with `W` of shape `[out_dim, in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient of a loss with respect to one [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = glorot_bound(in_dim, out_dim);
        let weights = Array2::from_shape_simple_fn((out_dim, in_dim), || {
            rng.random_range(-bound..=bound)
        });
        Self {
            weights,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension {
                expected: self.in_dim(),
                actual: x.len(),
            });
        }
        let x = ndarray::ArrayView1::from(x);
        Ok((self.weights.dot(&x) + &self.bias).to_vec())
    }

    /// Row-wise forward pass over a batch `[batch, in_dim]`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim());
        x.dot(&self.weights.t()) + &self.bias
    }

    /// Parameter gradients and input gradient given the layer input and the
    /// gradient at its output, both batched.
    pub fn backward_batch(
        &self,
        input: ArrayView2<f64>,
        grad_out: ArrayView2<f64>,
    ) -> (DenseGrad, Array2<f64>) {
        let grad = DenseGrad {
            weights: grad_out.t().dot(&input),
            bias: grad_out.sum_axis(Axis(0)),
        };
        (grad, grad_out.dot(&self.weights))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

impl DenseGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &DenseGrad) {
        self.weights += &other.weights;
        self.bias += &other.bias;
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
