//! Dense stacks with cached forward passes and analytic backpropagation.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use super::activation::Activation;
use super::dropout::dropout_mask;
use super::layer::{DenseGrad, DenseLayer};
use crate::error::{Error, Result};

/// One dense layer followed by an activation and (in training) dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dense: DenseLayer,
    pub activation: Activation,
    pub dropout: f64,
}

/// A feed-forward stack of [`Block`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub blocks: Vec<Block>,
}

/// Values saved by a training forward pass for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl Mlp {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    /// Glorot-initialised stack through `dims` (`dims.len() - 1` blocks).
    /// `activations[i]` and `dropouts[i]` apply after block `i`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        dropouts: &[f64],
        rng: &mut R,
    ) -> Self {
        assert_eq!(dims.len(), activations.len() + 1);
        assert_eq!(activations.len(), dropouts.len());
        let blocks = dims
            .windows(2)
            .zip(activations.iter().zip(dropouts))
            .map(|(d, (&activation, &dropout))| Block {
                dense: DenseLayer::glorot(d[0], d[1], rng),
                activation,
                dropout,
            })
            .collect();
        Self { blocks }
    }

    pub fn in_dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.dense.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.dense.out_dim())
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.blocks.iter().map(|b| &b.dense)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.blocks.iter_mut().map(|b| &mut b.dense)
    }

    /// Evaluation-mode pass (dropout off) over a batch `[batch, in_dim]`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for block in &self.blocks {
            h = block.dense.forward_batch(h.view());
            h.mapv_inplace(|v| block.activation.apply(v));
        }
        h
    }

    /// Training-mode pass. Dropout masks are drawn from `rng` in block order.
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        rng: &mut R,
    ) -> (Array2<f64>, ForwardCache) {
        let n = self.blocks.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre_activations: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut h = x.to_owned();
        for block in &self.blocks {
            let pre = block.dense.forward_batch(h.view());
            let mut out = pre.mapv(|v| block.activation.apply(v));
            let mask = (block.dropout > 0.0).then(|| {
                let m = dropout_mask(out.dim(), block.dropout, rng);
                out *= &m;
                m
            });
            cache.inputs.push(h);
            cache.pre_activations.push(pre);
            cache.masks.push(mask);
            h = out;
        }
        (h, cache)
    }

    /// Gradients of every block and of the input, given `grad_out` = dL/d(output).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<f64>,
    ) -> Result<(Vec<DenseGrad>, Array2<f64>)> {
        if cache.inputs.len() != self.blocks.len() {
            return Err(Error::Dimension {
                expected: self.blocks.len(),
                actual: cache.inputs.len(),
            });
        }
        let expected_shape = cache
            .pre_activations
            .last()
            .map(|p| p.dim())
            .unwrap_or((grad_out.nrows(), grad_out.ncols()));
        if grad_out.dim() != expected_shape {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match cached output {:?}",
                grad_out.dim(),
                expected_shape
            )));
        }

        let mut grads = Vec::with_capacity(self.blocks.len());
        let mut g = grad_out.to_owned();
        for (i, block) in self.blocks.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[i] {
                g *= mask;
            }
            let act = block.activation;
            Zip::from(&mut g)
                .and(&cache.pre_activations[i])
                .for_each(|g, &pre| *g *= act.derivative(pre));
            let (grad, g_in) = block.dense.backward_batch(cache.inputs[i].view(), g.view());
            grads.push(grad);
            g = g_in;
        }
        grads.reverse();
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mlp(dims: &[usize], acts: &[Activation], rng: &mut ChaCha8Rng) -> Mlp {
        let mut mlp = Mlp::glorot(dims, acts, &vec![0.0; acts.len()], rng);
        for layer in mlp.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        mlp
    }

    /// Sum of squares of the output, halved: dL/dy = y.
    fn half_sq(mlp: &Mlp, x: &Array2<f64>) -> f64 {
        0.5 * mlp.forward(x.view()).iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn gradients_match_finite_differences_on_2_2_2() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..10 {
            let mlp = random_mlp(&[2, 2, 2], &[Activation::Tanh, Activation::Tanh], &mut rng);
            let x = Array2::from_shape_simple_fn((3, 2), || rng.random_range(-1.0..1.0));
            let (y, cache) = mlp.forward_train(x.view(), &mut rng);
            let (grads, gx) = mlp.backward(&cache, y.view()).unwrap();

            for (bi, grad) in grads.iter().enumerate() {
                for idx in 0..grad.weights.len() {
                    let (o, i) = (idx / 2, idx % 2);
                    let mut plus = mlp.clone();
                    plus.blocks[bi].dense.weights[[o, i]] += h;
                    let mut minus = mlp.clone();
                    minus.blocks[bi].dense.weights[[o, i]] -= h;
                    let fd = (half_sq(&plus, &x) - half_sq(&minus, &x)) / (2.0 * h);
                    let an = grad.weights[[o, i]];
                    assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6));
                }
                for o in 0..grad.bias.len() {
                    let mut plus = mlp.clone();
                    plus.blocks[bi].dense.bias[o] += h;
                    let mut minus = mlp.clone();
                    minus.blocks[bi].dense.bias[o] -= h;
                    let fd = (half_sq(&plus, &x) - half_sq(&minus, &x)) / (2.0 * h);
                    let an = grad.bias[o];
                    assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6));
                }
            }
            for b in 0..3 {
                for i in 0..2 {
                    let mut xp = x.clone();
                    xp[[b, i]] += h;
                    let mut xm = x.clone();
                    xm[[b, i]] -= h;
                    let fd = (half_sq(&mlp, &xp) - half_sq(&mlp, &xm)) / (2.0 * h);
                    assert!((fd - gx[[b, i]]).abs() <= 1e-4 * fd.abs().max(1e-6));
                }
            }
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mlp = random_mlp(&[3, 4, 2], &[Activation::Relu, Activation::Tanh], &mut rng);
        let x = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-1.0..1.0));
        let (_, cache) = mlp.forward_train(x.view(), &mut rng);
        let (grads, gx) = mlp.backward(&cache, Array2::zeros((5, 2)).view()).unwrap();
        assert!(grads.iter().all(|g| g.weights.iter().chain(g.bias.iter()).all(|&v| v == 0.0)));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient() {
        // L = 1/2 ||X W^T + b - Y||^2 gives dL/dW = R^T X, dL/db = sum R with
        // residual R = X W^T + b - Y.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mlp = random_mlp(&[3, 2], &[Activation::Identity], &mut rng);
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.0..1.0));
        let y = Array2::from_shape_simple_fn((6, 2), || rng.random_range(-1.0..1.0));
        let (pred, cache) = mlp.forward_train(x.view(), &mut rng);
        let residual = &pred - &y;
        let (grads, _) = mlp.backward(&cache, residual.view()).unwrap();

        let w = &mlp.blocks[0].dense.weights;
        let b = &mlp.blocks[0].dense.bias;
        let mut expected_w = Array2::<f64>::zeros((2, 3));
        let mut expected_b = Array1::<f64>::zeros(2);
        for r in 0..6 {
            for o in 0..2 {
                let mut p = b[o];
                for i in 0..3 {
                    p += w[[o, i]] * x[[r, i]];
                }
                let res = p - y[[r, o]];
                expected_b[o] += res;
                for i in 0..3 {
                    expected_w[[o, i]] += res * x[[r, i]];
                }
            }
        }
        for (a, e) in grads[0].weights.iter().zip(expected_w.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
        for (a, e) in grads[0].bias.iter().zip(expected_b.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_masks_enter_backward() {
        let mlp = Mlp::new(vec![Block {
            dense: DenseLayer {
                weights: array![[1.0, 0.0], [0.0, 1.0]],
                bias: array![0.0, 0.0],
            },
            activation: Activation::Identity,
            dropout: 0.5,
        }]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_elem((50, 2), 1.0);
        let (y, cache) = mlp.forward_train(x.view(), &mut rng);
        let (_, gx) = mlp.backward(&cache, Array2::ones((50, 2)).view()).unwrap();
        // Identity block: output and input gradient both equal the mask.
        assert_eq!(y, gx);
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(y.iter().any(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_mlp(&[2, 2], &[Activation::Tanh], &mut rng);
        let b = random_mlp(&[2, 2, 2], &[Activation::Tanh, Activation::Tanh], &mut rng);
        let x = Array2::zeros((1, 2));
        let (_, cache) = a.forward_train(x.view(), &mut rng);
        assert!(b.backward(&cache, Array2::zeros((1, 2)).view()).is_err());
        assert!(a.backward(&cache, Array2::zeros((2, 2)).view()).is_err());
    }
}
