use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::window::{NormParams, SEQUENCE_LEN};
use crate::error::{Error, Result};
use crate::nn::{check_rate, Activation, DenseGrad, DenseLayer, Mlp};

/// How the reconstruction term aggregates squared errors over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconLoss {
    /// Mean over the window components.
    Mean,
    /// Sum over the window components.
    Sum,
    /// Gaussian negative log-likelihood with fixed variance, up to a constant.
    Gaussian { variance: f64 },
    /// Gaussian negative log-likelihood with the variance set to the batch
    /// mean squared error.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeArchitecture {
    pub input_len: usize,
    /// Encoder hidden sizes; the decoder mirrors them in reverse.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub dropout: f64,
    /// KL weight.
    pub beta: f64,
    pub recon_loss: ReconLoss,
}

impl Default for VaeArchitecture {
    fn default() -> Self {
        Self {
            input_len: SEQUENCE_LEN,
            hidden: vec![128, 64, 32],
            latent_dim: 5,
            dropout: 0.01,
            beta: 0.5,
            recon_loss: ReconLoss::Calibrated,
        }
    }
}

impl VaeArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::Config("input_len must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "hidden sizes {:?} must be non-empty and positive",
                self.hidden
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta {} must be >= 0", self.beta)));
        }
        if let ReconLoss::Gaussian { variance } = self.recon_loss {
            if !(variance > 0.0 && variance.is_finite()) {
                return Err(Error::Config(format!(
                    "gaussian variance {variance} must be positive"
                )));
            }
        }
        check_rate(self.dropout)
    }
}

/// Loss of one window or the mean over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Encoder trunk, mean and log-variance heads, decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub arch: VaeArchitecture,
    pub encoder: Mlp,
    pub mu_head: DenseLayer,
    pub logvar_head: DenseLayer,
    pub decoder: Mlp,
    /// Scaling of the data the model was trained on.
    pub norm: Option<NormParams>,
}

/// Parameter gradients in [`VaeModel::layers`] order.
pub type VaeGrads = Vec<DenseGrad>;

impl VaeModel {
    fn trunk_shapes(arch: &VaeArchitecture) -> (Vec<usize>, Vec<usize>) {
        let mut enc = vec![arch.input_len];
        enc.extend(&arch.hidden);
        let mut dec = vec![arch.latent_dim];
        dec.extend(arch.hidden.iter().rev());
        dec.push(arch.input_len);
        (enc, dec)
    }

    fn activations(arch: &VaeArchitecture) -> (Vec<Activation>, Vec<f64>, Vec<Activation>, Vec<f64>) {
        let n = arch.hidden.len();
        let enc_act = vec![Activation::Relu; n];
        let enc_drop = vec![arch.dropout; n];
        let mut dec_act = vec![Activation::Relu; n];
        dec_act.push(Activation::Tanh);
        let mut dec_drop = vec![arch.dropout; n];
        dec_drop.push(0.0);
        (enc_act, enc_drop, dec_act, dec_drop)
    }

    /// Glorot-initialised model.
    pub fn new<R: Rng + ?Sized>(arch: VaeArchitecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let (enc_dims, dec_dims) = Self::trunk_shapes(&arch);
        let (enc_act, enc_drop, dec_act, dec_drop) = Self::activations(&arch);
        let encoder = Mlp::glorot(&enc_dims, &enc_act, &enc_drop, rng);
        let last = *arch.hidden.last().expect("validated");
        let mu_head = DenseLayer::glorot(last, arch.latent_dim, rng);
        let logvar_head = DenseLayer::glorot(last, arch.latent_dim, rng);
        let decoder = Mlp::glorot(&dec_dims, &dec_act, &dec_drop, rng);
        Ok(Self {
            arch,
            encoder,
            mu_head,
            logvar_head,
            decoder,
            norm: None,
        })
    }

    /// Model with every weight and bias zero.
    pub fn zeros(arch: VaeArchitecture) -> Result<Self> {
        let mut model = Self::new(arch, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        for layer in model.layers_mut() {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        Ok(model)
    }

    /// Layers in declaration order: encoder, mu head, log-variance head, decoder.
    pub fn layers(&self) -> Vec<&DenseLayer> {
        let mut out: Vec<&DenseLayer> = self.encoder.layers().collect();
        out.push(&self.mu_head);
        out.push(&self.logvar_head);
        out.extend(self.decoder.layers());
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut DenseLayer> {
        let mut out: Vec<&mut DenseLayer> = self.encoder.layers_mut().collect();
        out.push(&mut self.mu_head);
        out.push(&mut self.logvar_head);
        out.extend(self.decoder.layers_mut());
        out
    }

    /// Names and activations of [`Self::layers`], for checkpoint manifests.
    pub fn layer_descriptions(&self) -> Vec<(String, Activation)> {
        let mut out: Vec<(String, Activation)> = self
            .encoder
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (format!("encoder.{i}"), b.activation))
            .collect();
        out.push(("mu".into(), Activation::Identity));
        out.push(("logvar".into(), Activation::Identity));
        out.extend(
            self.decoder
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| (format!("decoder.{i}"), b.activation)),
        );
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|l| l.n_params()).sum()
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<()> {
        if got == expected {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected,
                actual: got,
            })
        }
    }

    /// Evaluation-mode encoder: `(mu, logvar)` for each row of `x`.
    pub fn encode_batch(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = self.encoder.forward(x);
        (
            self.mu_head.forward_batch(h.view()),
            self.logvar_head.forward_batch(h.view()),
        )
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Array2<f64> {
        self.decoder.forward(z)
    }

    /// Deterministic reconstruction through the posterior mean.
    pub fn reconstruct_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (mu, _) = self.encode_batch(x);
        self.decode_batch(mu.view())
    }

    pub fn encode(&self, window: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(window.len(), self.arch.input_len)?;
        let x = ndarray::ArrayView2::from_shape((1, window.len()), window).expect("row");
        let (mu, logvar) = self.encode_batch(x);
        Ok((mu.into_raw_vec_and_offset().0, logvar.into_raw_vec_and_offset().0))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len(), self.arch.latent_dim)?;
        let z = ndarray::ArrayView2::from_shape((1, z.len()), z).expect("row");
        Ok(self.decode_batch(z).into_raw_vec_and_offset().0)
    }

    /// Batch loss and gradients with fixed noise `eps` (`[batch, latent]`).
    /// Dropout masks are drawn from `rng`.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        eps: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<(LossParts, VaeGrads)> {
        let batch = x.nrows();
        self.check_len(x.ncols(), self.arch.input_len)?;
        self.check_len(eps.ncols(), self.arch.latent_dim)?;
        self.check_len(eps.nrows(), batch)?;
        let beta = self.arch.beta;
        let b = batch as f64;

        let (h, enc_cache) = self.encoder.forward_train(x, rng);
        let mu = self.mu_head.forward_batch(h.view());
        let logvar = self.logvar_head.forward_batch(h.view());
        let sigma = logvar.mapv(|lv| (0.5 * lv).exp());
        let z = &mu + &(&sigma * &eps);
        let (x_hat, dec_cache) = self.decoder.forward_train(z.view(), rng);

        let diff = &x_hat - &x;
        let sq: f64 = diff.iter().map(|d| d * d).sum();
        let (recon, recon_scale) = self.recon_term(sq, b);
        let kl = Zip::from(&mu)
            .and(&logvar)
            .fold(0.0, |acc, &m, &lv| acc + kl_term(m, lv))
            / b;
        let loss = LossParts {
            total: recon + beta * kl,
            recon,
            kl,
        };

        let d_xhat = diff.mapv(|d| 2.0 * d * recon_scale / b);
        let (dec_grads, dz) = self.decoder.backward(&dec_cache, d_xhat.view())?;

        let mut d_mu = dz.clone();
        Zip::from(&mut d_mu)
            .and(&mu)
            .for_each(|g, &m| *g += beta * m / b);
        let mut d_logvar = &dz * &sigma * eps * 0.5;
        Zip::from(&mut d_logvar)
            .and(&logvar)
            .for_each(|g, &lv| *g += beta * 0.5 * (lv.exp() - 1.0) / b);

        let (mu_grad, dh_mu) = self.mu_head.backward_batch(h.view(), d_mu.view());
        let (lv_grad, dh_lv) = self.logvar_head.backward_batch(h.view(), d_logvar.view());
        let dh = dh_mu + dh_lv;
        let (enc_grads, _) = self.encoder.backward(&enc_cache, dh.view())?;

        let mut grads = enc_grads;
        grads.push(mu_grad);
        grads.push(lv_grad);
        grads.extend(dec_grads);
        Ok((loss, grads))
    }

    /// Mean reconstruction loss per window and the weight `w` such that its
    /// gradient with respect to each squared error is `w / b`.
    fn recon_term(&self, sq: f64, b: f64) -> (f64, f64) {
        let d = self.arch.input_len as f64;
        let fixed = |w: f64| (sq * w / b, w);
        match self.arch.recon_loss {
            ReconLoss::Mean => fixed(1.0 / d),
            ReconLoss::Sum => fixed(1.0),
            ReconLoss::Gaussian { variance } => fixed(0.5 / variance),
            ReconLoss::Calibrated => {
                let mse = (sq / (b * d)).max(MIN_CALIBRATED_VARIANCE);
                (0.5 * d * mse.ln(), 0.5 / mse)
            }
        }
    }

    /// Mean evaluation-mode loss over `x`, with `z = mu` for the
    /// reconstruction. The reported `recon` is always the per-component
    /// mean squared error, whatever [`ReconLoss`] training uses.
    pub fn eval_loss(&self, x: ArrayView2<f64>) -> (LossParts, f64) {
        let b = x.nrows().max(1) as f64;
        let (mu, logvar) = self.encode_batch(x);
        let x_hat = self.decode_batch(mu.view());
        let sq: f64 = (&x_hat - &x).iter().map(|d| d * d).sum();
        let (recon, _) = self.recon_term(sq, b);
        let mse = sq / (b * self.arch.input_len as f64);
        let kl = Zip::from(&mu)
            .and(&logvar)
            .fold(0.0, |acc, &m, &lv| acc + kl_term(m, lv))
            / b;
        (
            LossParts {
                total: recon + self.arch.beta * kl,
                recon,
                kl,
            },
            mse,
        )
    }
}

const MIN_CALIBRATED_VARIANCE: f64 = 1e-6;

fn kl_term(mu: f64, logvar: f64) -> f64 {
    -0.5 * (1.0 + logvar - mu * mu - logvar.exp())
}

/// Closed-form `KL(N(mu, diag(exp(logvar))) || N(0, I))`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    assert_eq!(mu.len(), logvar.len(), "mu and logvar lengths differ");
    mu.iter().zip(logvar).map(|(&m, &lv)| kl_term(m, lv)).sum()
}

/// `z = mu + sigma * eps` with `sigma = exp(logvar / 2)`.
pub fn reparameterize_with(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| {
            let sigma = (0.5 * lv).exp();
            if sigma == 0.0 {
                m
            } else {
                m + sigma * e
            }
        })
        .collect()
}

/// [`reparameterize_with`] using standard-normal noise from `rng`.
pub fn reparameterize<R: Rng + ?Sized>(mu: &[f64], logvar: &[f64], rng: &mut R) -> Vec<f64> {
    let eps: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    reparameterize_with(mu, logvar, &eps)
}

/// Standard-normal matrix of shape `(rows, cols)`.
pub fn sample_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Loss of one window: mean squared error over the components plus
/// `beta` times the KL term.
pub fn vae_loss(x: &[f64], x_hat: &[f64], mu: &[f64], logvar: &[f64], beta: f64) -> LossParts {
    assert_eq!(x.len(), x_hat.len(), "window lengths differ");
    let recon = x
        .iter()
        .zip(x_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    let kl = kl_divergence(mu, logvar);
    LossParts {
        total: recon + beta * kl,
        recon,
        kl,
    }
}
