//! Reconstruction-based detectors: a dense autoencoder and a Gaussian VAE.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::training::{self, TrainLog, Trainable, TrainingConfig};
use crate::error::{Error, Result};
use crate::nn::{chain, Activation, DenseNetwork, ForwardCache, GradientSet, LayerSpec, Optimizer};
use crate::util;

/// Widths of the encoder; the decoder mirrors them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub latent: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![512, 256, 128],
            latent: 64,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.hidden.contains(&0) {
            return Err(Error::NetworkSpec("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `d -> hidden.. -> latent`; hidden layers use batch norm and leaky
    /// ReLU, the latent layer is linear.
    pub fn encoder_specs(&self, dim: usize) -> Vec<LayerSpec> {
        let mut dims = vec![dim];
        dims.extend(&self.hidden);
        dims.push(self.latent);
        chain(&dims, (Activation::LeakyRelu, true), (Activation::Identity, false))
    }

    /// `latent -> reversed hidden.. -> d` with a tanh output.
    pub fn decoder_specs(&self, dim: usize) -> Vec<LayerSpec> {
        let mut dims = vec![self.latent];
        dims.extend(self.hidden.iter().rev());
        dims.push(dim);
        chain(&dims, (Activation::LeakyRelu, true), (Activation::Tanh, false))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub architecture: Architecture,
    pub training: TrainingConfig,
}

/// Per-row mean squared residual.
pub fn row_mse(x: ArrayView2<f64>, recon: ArrayView2<f64>) -> Vec<f64> {
    let d = x.ncols() as f64;
    x.outer_iter()
        .zip(recon.outer_iter())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / d)
        .collect()
}

fn check_dim(expected: usize, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::Shape {
            expected,
            actual: x.ncols(),
        });
    }
    Ok(())
}

fn flatten_all(nets: &[&DenseNetwork]) -> Vec<f64> {
    nets.iter().flat_map(|n| n.flat_params()).collect()
}

fn unflatten_all(nets: &mut [&mut DenseNetwork], values: &[f64]) -> Result<()> {
    let total: usize = nets.iter().map(|n| n.num_params()).sum();
    if total != values.len() {
        return Err(Error::Shape {
            expected: total,
            actual: values.len(),
        });
    }
    let mut offset = 0;
    for net in nets.iter_mut() {
        let k = net.num_params();
        net.set_flat_params(&values[offset..offset + k])?;
        offset += k;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
}

impl AutoencoderModel {
    pub fn new(dim: usize, architecture: &Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        Ok(Self {
            encoder: DenseNetwork::new(&architecture.encoder_specs(dim), util::derive_seed(seed, &["encoder"]))?,
            decoder: DenseNetwork::new(&architecture.decoder_specs(dim), util::derive_seed(seed, &["decoder"]))?,
        })
    }

    pub fn from_networks(encoder: DenseNetwork, decoder: DenseNetwork) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() || encoder.input_dim() != decoder.output_dim() {
            return Err(Error::NetworkSpec("decoder does not mirror encoder".into()));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Fits on `train`, early-stopping on `validation` (or a carved-off
    /// share of `train` when `validation` has no rows).
    pub fn train(
        train: ArrayView2<f64>,
        validation: ArrayView2<f64>,
        config: &AutoencoderConfig,
        seed: u64,
    ) -> Result<(Self, TrainLog)> {
        let mut model = Self::new(train.ncols(), &config.architecture, seed)?;
        let log = fit_with_holdout(&mut model, train, validation, &config.training, seed)?;
        Ok((model, log))
    }

    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.dim(), x)?;
        let z = self.encoder.infer(x)?;
        self.decoder.infer(z.view())
    }

    /// Mean squared reconstruction error per row.
    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let recon = self.reconstruct(x)?;
        Ok(row_mse(x, recon.view()))
    }

    /// Training-mode objective with gradients for both networks; no state
    /// is modified.
    fn pass(&self, batch: ArrayView2<f64>) -> Result<(f64, [GradientSet; 2], [ForwardCache; 2])> {
        let (z, ec) = self.encoder.forward(batch, crate::nn::Mode::Train)?;
        let (out, dc) = self.decoder.forward(z.view(), crate::nn::Mode::Train)?;
        let (loss, g) = crate::nn::mse_loss(&out, &batch.to_owned());
        let dg = self.decoder.backward(&dc, g.view())?;
        let eg = self.encoder.backward(&ec, dg.input.view())?;
        Ok((loss, [eg, dg], [ec, dc]))
    }

    pub fn objective(&self, batch: ArrayView2<f64>) -> Result<f64> {
        self.pass(batch).map(|(l, _, _)| l)
    }

    pub fn objective_gradient(&self, batch: ArrayView2<f64>) -> Result<Vec<f64>> {
        let (_, [eg, dg], _) = self.pass(batch)?;
        let mut flat = eg.flatten();
        flat.extend(dg.flatten());
        Ok(flat)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten_all(&[&self.encoder, &self.decoder])
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        unflatten_all(&mut [&mut self.encoder, &mut self.decoder], values)
    }
}

impl Trainable for AutoencoderModel {
    fn train_step(
        &mut self,
        batch: &Array2<f64>,
        _labels: &[usize],
        optimizer: &mut Optimizer,
        _rng: &mut util::Rng,
    ) -> Result<f64> {
        let (loss, [eg, dg], [ec, dc]) = self.pass(batch.view())?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.encoder.update_running_stats(&ec)?;
        self.decoder.update_running_stats(&dc)?;
        optimizer.step_many(&mut [&mut self.encoder, &mut self.decoder], &[&eg, &dg], 0.0)?;
        Ok(loss)
    }

    fn eval_loss(&self, data: ArrayView2<f64>, _labels: &[usize]) -> Result<f64> {
        let s = self.score(data)?;
        Ok(util::mean(&s))
    }
}

/// Fits a label-free model, carving a validation split when none is given.
pub(crate) fn fit_with_holdout<T: Trainable>(
    model: &mut T,
    train: ArrayView2<f64>,
    validation: ArrayView2<f64>,
    config: &TrainingConfig,
    seed: u64,
) -> Result<TrainLog> {
    let labels = vec![0; train.nrows()];
    if validation.nrows() > 0 {
        let vlabels = vec![0; validation.nrows()];
        return training::fit(model, train, &labels, validation, &vlabels, config, seed);
    }
    let (tr, trl, va, val) = training::holdout(
        train,
        &labels,
        config.validation_fraction,
        util::derive_seed(seed, &["holdout"]),
    );
    training::fit(model, tr.view(), &trl, va.view(), &val, config, seed)
}

/// KL(N(mu, exp(logvar)) || N(0, I)) for one latent vector.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub architecture: Architecture,
    pub training: TrainingConfig,
    /// Latent draws averaged per score.
    pub score_samples: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            training: TrainingConfig::default(),
            score_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    /// Shared trunk ending in the latent-width layer.
    pub encoder: DenseNetwork,
    pub mu_head: DenseNetwork,
    pub logvar_head: DenseNetwork,
    pub decoder: DenseNetwork,
    pub score_samples: usize,
    /// Seed of the latent draws used for scoring.
    pub score_seed: u64,
}

impl VaeModel {
    pub fn new(dim: usize, config: &VaeConfig, seed: u64) -> Result<Self> {
        let arch = &config.architecture;
        arch.validate()?;
        if config.score_samples == 0 {
            return Err(Error::Config("score_samples must be at least 1".into()));
        }
        let head = [LayerSpec::new(arch.latent, arch.latent, Activation::Identity, false)];
        Ok(Self {
            encoder: DenseNetwork::new(&arch.encoder_specs(dim), util::derive_seed(seed, &["encoder"]))?,
            mu_head: DenseNetwork::new(&head, util::derive_seed(seed, &["mu"]))?,
            logvar_head: DenseNetwork::new(&head, util::derive_seed(seed, &["logvar"]))?,
            decoder: DenseNetwork::new(&arch.decoder_specs(dim), util::derive_seed(seed, &["decoder"]))?,
            score_samples: config.score_samples,
            score_seed: util::derive_seed(seed, &["score"]),
        })
    }

    pub fn dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.output_dim()
    }

    pub fn train(
        train: ArrayView2<f64>,
        validation: ArrayView2<f64>,
        config: &VaeConfig,
        seed: u64,
    ) -> Result<(Self, TrainLog)> {
        let mut model = Self::new(train.ncols(), config, seed)?;
        let log = fit_with_holdout(&mut model, train, validation, &config.training, seed)?;
        Ok((model, log))
    }

    /// Posterior mean and log-variance in inference mode.
    pub fn posterior(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        check_dim(self.dim(), x)?;
        let h = self.encoder.infer(x)?;
        Ok((self.mu_head.infer(h.view())?, self.logvar_head.infer(h.view())?))
    }

    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.score_with(x, self.score_samples, self.score_seed)
    }

    /// Mean reconstruction MSE over `samples` latent draws. Draw `s` uses
    /// the same noise vector for every row, so a row's score does not
    /// depend on the rest of the batch.
    pub fn score_with(&self, x: ArrayView2<f64>, samples: usize, seed: u64) -> Result<Vec<f64>> {
        if samples == 0 {
            return Err(Error::InvalidArgument("score sample count must be at least 1".into()));
        }
        let (mu, logvar) = self.posterior(x)?;
        let sigma = logvar.mapv(|v| (0.5 * v).exp());
        let mut rng = util::rng(seed);
        let mut total = vec![0.0; x.nrows()];
        for _ in 0..samples {
            let eps: Array1<f64> = (0..self.latent_dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let z = &mu + &(&sigma * &eps);
            let recon = self.decoder.infer(z.view())?;
            for (t, m) in total.iter_mut().zip(row_mse(x, recon.view())) {
                *t += m;
            }
        }
        Ok(total.into_iter().map(|t| t / samples as f64).collect())
    }

    /// Negative ELBO averaged over the batch: summed squared error plus the
    /// closed-form KL term, for fixed reparameterization noise `eps`.
    #[allow(clippy::type_complexity)]
    fn pass(&self, batch: ArrayView2<f64>, eps: ArrayView2<f64>) -> Result<(f64, [GradientSet; 4], [ForwardCache; 4])> {
        use crate::nn::Mode::Train;
        let n = batch.nrows() as f64;
        let (h, hc) = self.encoder.forward(batch, Train)?;
        let (mu, mc) = self.mu_head.forward(h.view(), Train)?;
        let (lv, lc) = self.logvar_head.forward(h.view(), Train)?;
        let sigma = lv.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&sigma * &eps);
        let (out, dc) = self.decoder.forward(z.view(), Train)?;

        let diff = &out - &batch;
        let recon: f64 = diff.iter().map(|d| d * d).sum();
        let kl: f64 = mu
            .iter()
            .zip(lv.iter())
            .map(|(m, l)| -0.5 * (1.0 + l - m * m - l.exp()))
            .sum();
        let loss = (recon + kl) / n;

        let dg = self.decoder.backward(&dc, (diff * (2.0 / n)).view())?;
        let dz = &dg.input;
        let dmu = dz + &(&mu / n);
        let dlv = dz * &sigma * eps * 0.5 + &lv.mapv(|l| 0.5 * (l.exp() - 1.0) / n);
        let mg = self.mu_head.backward(&mc, dmu.view())?;
        let lg = self.logvar_head.backward(&lc, dlv.view())?;
        let dh = &mg.input + &lg.input;
        let hg = self.encoder.backward(&hc, dh.view())?;
        Ok((loss, [hg, mg, lg, dg], [hc, mc, lc, dc]))
    }

    pub fn objective(&self, batch: ArrayView2<f64>, eps: ArrayView2<f64>) -> Result<f64> {
        self.pass(batch, eps).map(|(l, _, _)| l)
    }

    pub fn objective_gradient(&self, batch: ArrayView2<f64>, eps: ArrayView2<f64>) -> Result<Vec<f64>> {
        let (_, grads, _) = self.pass(batch, eps)?;
        Ok(grads.iter().flat_map(|g| g.flatten()).collect())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten_all(&[&self.encoder, &self.mu_head, &self.logvar_head, &self.decoder])
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        unflatten_all(
            &mut [
                &mut self.encoder,
                &mut self.mu_head,
                &mut self.logvar_head,
                &mut self.decoder,
            ],
            values,
        )
    }

    fn draw_noise(&self, n: usize, rng: &mut util::Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, self.latent_dim()), || StandardNormal.sample(rng))
    }
}

impl Trainable for VaeModel {
    fn train_step(
        &mut self,
        batch: &Array2<f64>,
        _labels: &[usize],
        optimizer: &mut Optimizer,
        rng: &mut util::Rng,
    ) -> Result<f64> {
        let eps = self.draw_noise(batch.nrows(), rng);
        let (loss, [hg, mg, lg, dg], [hc, mc, lc, dc]) = self.pass(batch.view(), eps.view())?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.encoder.update_running_stats(&hc)?;
        self.mu_head.update_running_stats(&mc)?;
        self.logvar_head.update_running_stats(&lc)?;
        self.decoder.update_running_stats(&dc)?;
        optimizer.step_many(
            &mut [
                &mut self.encoder,
                &mut self.mu_head,
                &mut self.logvar_head,
                &mut self.decoder,
            ],
            &[&hg, &mg, &lg, &dg],
            0.0,
        )?;
        Ok(loss)
    }

    /// Inference-mode negative ELBO at the posterior mean (no sampling),
    /// which keeps early stopping deterministic.
    fn eval_loss(&self, data: ArrayView2<f64>, _labels: &[usize]) -> Result<f64> {
        let (mu, lv) = self.posterior(data)?;
        let recon = self.decoder.infer(mu.view())?;
        let d = data.ncols() as f64;
        let rec: f64 = row_mse(data, recon.view()).iter().map(|m| m * d).sum();
        let kl: f64 = mu
            .axis_iter(Axis(0))
            .zip(lv.axis_iter(Axis(0)))
            .map(|(m, l)| kl_divergence(&m.to_vec(), &l.to_vec()))
            .sum();
        Ok((rec + kl) / data.nrows().max(1) as f64)
    }
}
