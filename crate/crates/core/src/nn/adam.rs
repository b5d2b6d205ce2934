//! Adam with bias correction.

use ndarray::{Array1, Array2, Zip};

use super::layer::{DenseGrad, DenseLayer};
use crate::error::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// Read on every step; a scheduler may change it between steps.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    /// Zeroed moments shaped like `layers`.
    pub fn new<'a>(lr: f64, layers: impl IntoIterator<Item = &'a DenseLayer>) -> Self {
        let moments = layers
            .into_iter()
            .map(|l| Moments {
                m_w: Array2::zeros(l.weights.raw_dim()),
                v_w: Array2::zeros(l.weights.raw_dim()),
                m_b: Array1::zeros(l.bias.raw_dim()),
                v_b: Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        Self {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moments of the weights of tensor `i`.
    pub fn weight_moments(&self, i: usize) -> (&Array2<f64>, &Array2<f64>) {
        (&self.moments[i].m_w, &self.moments[i].v_w)
    }

    /// Apply one update to `layers` (in the order the state was built with).
    ///
    /// Non-finite gradients are rejected before anything is modified.
    pub fn step(&mut self, layers: &mut [&mut DenseLayer], grads: &[DenseGrad]) -> Result<()> {
        if layers.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(Error::Dimension {
                expected: self.moments.len(),
                actual: layers.len().min(grads.len()),
            });
        }
        for (i, ((layer, grad), mom)) in layers.iter().zip(grads).zip(&self.moments).enumerate() {
            if layer.weights.dim() != grad.weights.dim()
                || layer.bias.dim() != grad.bias.dim()
                || mom.m_w.dim() != grad.weights.dim()
            {
                return Err(Error::Shape(format!(
                    "tensor {i}: parameter {:?}, gradient {:?}",
                    layer.weights.dim(),
                    grad.weights.dim()
                )));
            }
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of tensor {i} at optimizer step {}",
                    self.step + 1
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.lr);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (i, ((layer, grad), mom)) in layers
            .iter_mut()
            .zip(grads)
            .zip(self.moments.iter_mut())
            .enumerate()
        {
            Zip::from(&mut layer.weights)
                .and(&grad.weights)
                .and(&mut mom.m_w)
                .and(&mut mom.v_w)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&grad.bias)
                .and(&mut mom.m_b)
                .and(&mut mom.v_b)
                .for_each(update);
            if !layer.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters of tensor {i} after optimizer step {}",
                    self.step
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_layer(w: f64) -> DenseLayer {
        DenseLayer {
            weights: array![[w]],
            bias: array![0.0],
        }
    }

    fn scalar_grad(g: f64) -> DenseGrad {
        DenseGrad {
            weights: array![[g]],
            bias: array![0.0],
        }
    }

    #[test]
    fn first_step_from_zero_state() {
        let lr = 0.01;
        for g in [0.3, -2.0, 1e-3] {
            let mut layer = scalar_layer(1.0);
            let mut adam = AdamState::new(lr, [&layer]);
            adam.step(&mut [&mut layer], &[scalar_grad(g)]).unwrap();
            let expected = 1.0 - lr * g / (g.abs() + DEFAULT_EPSILON);
            assert!((layer.weights[[0, 0]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut layer = scalar_layer(0.5);
        let mut adam = AdamState::new(0.1, [&layer]);
        adam.step(&mut [&mut layer], &[scalar_grad(1.0)]).unwrap();
        let w = layer.weights[[0, 0]];
        let (m0, v0) = (adam.weight_moments(0).0[[0, 0]], adam.weight_moments(0).1[[0, 0]]);
        // With m > 0 the bias-corrected step is still non-zero; use lr = 0
        // to isolate the moment decay.
        adam.lr = 0.0;
        adam.step(&mut [&mut layer], &[scalar_grad(0.0)]).unwrap();
        assert_eq!(layer.weights[[0, 0]], w);
        let (m1, v1) = (adam.weight_moments(0).0[[0, 0]], adam.weight_moments(0).1[[0, 0]]);
        assert!((m1 - DEFAULT_BETA1 * m0).abs() < 1e-15);
        assert!((v1 - DEFAULT_BETA2 * v0).abs() < 1e-15);

        let mut fresh = scalar_layer(0.5);
        let mut adam = AdamState::new(0.1, [&fresh]);
        adam.step(&mut [&mut fresh], &[scalar_grad(0.0)]).unwrap();
        assert_eq!(fresh.weights[[0, 0]], 0.5);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let lr = 0.01;
        let mut layer = scalar_layer(0.0);
        let mut adam = AdamState::new(lr, [&layer]);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = layer.weights[[0, 0]];
            adam.step(&mut [&mut layer], &[scalar_grad(-3.0)]).unwrap();
            last = layer.weights[[0, 0]] - before;
        }
        assert!((last - lr).abs() < 1e-6 * lr, "step {last}");
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut layer = scalar_layer(0.25);
        let mut adam = AdamState::new(0.0, [&layer]);
        for g in [1.0, -4.0, 0.5] {
            adam.step(&mut [&mut layer], &[scalar_grad(g)]).unwrap();
        }
        assert_eq!(layer.weights[[0, 0]], 0.25);
        assert_eq!(adam.step_count(), 3);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut layer = scalar_layer(0.25);
        let mut adam = AdamState::new(0.1, [&layer]);
        let err = adam
            .step(&mut [&mut layer], &[scalar_grad(f64::NAN)])
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(layer.weights[[0, 0]], 0.25);
        assert_eq!(adam.step_count(), 0);
    }
}
