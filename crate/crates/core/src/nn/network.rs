use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, batch_norm: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            batch_norm,
        }
    }
}

/// Builds a dimension-chained stack: `dims[0] -> dims[1] -> ...`. Hidden
/// layers get `hidden`; the last layer gets `last`.
pub fn chain(dims: &[usize], hidden: (Activation, bool), last: (Activation, bool)) -> Vec<LayerSpec> {
    let n = dims.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let (act, bn) = if i + 1 == n { last } else { hidden };
            LayerSpec::new(dims[i], dims[i + 1], act, bn)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    /// (out_dim, in_dim)
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub batch_norm: Option<BatchNorm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Feed-forward chain of dense layers: linear, optional batch norm, activation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNetwork {
    layers: Vec<Layer>,
    #[serde(skip, default = "next_version")]
    version: u64,
}

impl PartialEq for DenseNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    output: Array2<f64>,
    bn: Option<BnCache>,
}

/// Activations recorded by [`DenseNetwork::forward`] for the backward pass.
pub struct ForwardCache {
    version: u64,
    mode: Mode,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.layers.first().map(|l| l.input.nrows()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// One gradient tensor per parameter tensor, plus the gradient with respect
/// to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
    pub input: Array2<f64>,
}

impl GradientSet {
    /// Parameter gradients in canonical order (layer by layer: weight, bias,
    /// gamma, beta).
    pub fn tensors(&self) -> Vec<(&[f64], ParamKind)> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push((g.weight.as_slice().expect("standard layout"), ParamKind::Weight));
            out.push((g.bias.as_slice().expect("standard layout"), ParamKind::Bias));
            if let (Some(gm), Some(bt)) = (&g.gamma, &g.beta) {
                out.push((gm.as_slice().expect("standard layout"), ParamKind::Gamma));
                out.push((bt.as_slice().expect("standard layout"), ParamKind::Beta));
            }
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(t, _)| t.iter().copied())
            .collect()
    }

    /// Adds `other` in place; shapes must match.
    pub fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
            if let (Some(x), Some(y)) = (a.gamma.as_mut(), b.gamma.as_ref()) {
                *x += y;
            }
            if let (Some(x), Some(y)) = (a.beta.as_mut(), b.beta.as_ref()) {
                *x += y;
            }
        }
    }
}

impl DenseNetwork {
    /// Creates a network with uniform fan-in initialization
    /// `U(-1/sqrt(in), 1/sqrt(in))`, zero biases, unit gamma, zero beta.
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::NetworkSpec("network needs at least one layer".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            if s.in_dim == 0 || s.out_dim == 0 {
                return Err(Error::NetworkSpec(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && specs[i - 1].out_dim != s.in_dim {
                return Err(Error::NetworkSpec(format!(
                    "layer {} outputs {} but layer {i} expects {}",
                    i - 1,
                    specs[i - 1].out_dim,
                    s.in_dim
                )));
            }
        }
        let mut rng = util::rng(seed);
        let layers = specs
            .iter()
            .map(|&spec| {
                let bound = 1.0 / (spec.in_dim as f64).sqrt();
                let weight = Array2::from_shape_fn((spec.out_dim, spec.in_dim), |_| rng.random_range(-bound..bound));
                Layer {
                    spec,
                    weight,
                    bias: Array1::zeros(spec.out_dim),
                    batch_norm: spec.batch_norm.then(|| BatchNorm {
                        gamma: Array1::ones(spec.out_dim),
                        beta: Array1::zeros(spec.out_dim),
                        running_mean: Array1::zeros(spec.out_dim),
                        running_var: Array1::ones(spec.out_dim),
                    }),
                }
            })
            .collect();
        Ok(Self {
            layers,
            version: next_version(),
        })
    }

    /// Nominal standard deviation of the initial weights for a given fan-in.
    pub fn init_std(fan_in: usize) -> f64 {
        1.0 / (fan_in as f64).sqrt() / 3f64.sqrt()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to a layer; invalidates outstanding caches.
    pub fn layer_mut(&mut self, i: usize) -> &mut Layer {
        self.version = next_version();
        &mut self.layers[i]
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.batch_norm.is_some())
    }

    /// Forward pass. Training mode normalizes with batch statistics (and
    /// needs at least two rows when any layer has batch norm); inference
    /// mode uses running statistics. Running statistics are not touched
    /// here, see [`DenseNetwork::update_running_stats`].
    pub fn forward(&self, input: ArrayView2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: input.ncols(),
            });
        }
        let n = input.nrows();
        if mode == Mode::Train && self.has_batch_norm() && n < 2 {
            return Err(Error::BatchSize(n));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let bn_cache = match (&layer.batch_norm, mode) {
                (Some(bn), Mode::Train) => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = &centered * &inv_std;
                    z = &xhat * &bn.gamma + &bn.beta;
                    Some(BnCache {
                        xhat,
                        inv_std,
                        batch_mean: mean,
                        batch_var: var,
                    })
                }
                (Some(bn), Mode::Inference) => {
                    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = (&z - &bn.running_mean) * &inv_std;
                    z = &xhat * &bn.gamma + &bn.beta;
                    Some(BnCache {
                        xhat,
                        inv_std,
                        batch_mean: bn.running_mean.clone(),
                        batch_var: bn.running_var.clone(),
                    })
                }
                (None, _) => None,
            };
            let act = layer.spec.activation;
            let out = z.mapv(|v| act.apply(v));
            caches.push(LayerCache {
                input: x,
                pre_activation: z,
                output: out.clone(),
                bn: bn_cache,
            });
            x = out;
        }
        Ok((
            x,
            ForwardCache {
                version: self.version,
                mode,
                layers: caches,
            },
        ))
    }

    /// Exponential moving average update of the running statistics from a
    /// training-mode cache. Running variance uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        self.check_cache(cache)?;
        if cache.mode != Mode::Train {
            return Ok(());
        }
        let n = cache.batch_size() as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(bc)) = (layer.batch_norm.as_mut(), lc.bn.as_ref()) {
                Zip::from(&mut bn.running_mean)
                    .and(&bc.batch_mean)
                    .for_each(|r, &m| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
                Zip::from(&mut bn.running_var)
                    .and(&bc.batch_var)
                    .for_each(|r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias);
            }
        }
        // running stats do not enter training-mode outputs, so the cache stays valid
        self.version = cache.version;
        Ok(())
    }

    /// Training-mode forward that also updates running statistics.
    pub fn forward_train(&mut self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let (out, cache) = self.forward(input, Mode::Train)?;
        self.update_running_stats(&cache)?;
        Ok((out, cache))
    }

    /// Inference-mode forward without a cache.
    pub fn infer(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(input, Mode::Inference).map(|(out, _)| out)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::Cache(
                "cache was produced by a different or since-modified network".into(),
            ));
        }
        Ok(())
    }

    /// Reverse-mode gradients of a scalar loss given `grad_output` = dL/d(output).
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> Result<GradientSet> {
        self.check_cache(cache)?;
        let n = cache.batch_size();
        if grad_output.dim() != (n, self.output_dim()) {
            return Err(Error::Cache(format!(
                "output gradient has shape {:?}, expected ({n}, {})",
                grad_output.dim(),
                self.output_dim()
            )));
        }
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let act = layer.spec.activation;
            let mut dz = upstream;
            Zip::from(&mut dz)
                .and(&lc.pre_activation)
                .and(&lc.output)
                .for_each(|g, &x, &y| *g *= act.derivative(x, y));

            let (dgamma, dbeta) = match (&layer.batch_norm, &lc.bn) {
                (Some(bn), Some(bc)) => {
                    let dgamma = (&dz * &bc.xhat).sum_axis(Axis(0));
                    let dbeta = dz.sum_axis(Axis(0));
                    let dxhat = &dz * &bn.gamma;
                    dz = match cache.mode {
                        Mode::Train => {
                            let nf = n as f64;
                            let sum_dxhat = dxhat.sum_axis(Axis(0));
                            let sum_dxhat_xhat = (&dxhat * &bc.xhat).sum_axis(Axis(0));
                            let mut dx = dxhat * nf - &sum_dxhat - &(&bc.xhat * &sum_dxhat_xhat);
                            dx *= &(&bc.inv_std / nf);
                            dx
                        }
                        Mode::Inference => dxhat * &bc.inv_std,
                    };
                    (Some(dgamma), Some(dbeta))
                }
                _ => (None, None),
            };

            let dweight = dz.t().dot(&lc.input);
            let dbias = dz.sum_axis(Axis(0));
            upstream = dz.dot(&layer.weight);
            grads.push(LayerGrads {
                weight: dweight,
                bias: dbias,
                gamma: dgamma,
                beta: dbeta,
            });
        }
        grads.reverse();
        Ok(GradientSet {
            layers: grads,
            input: upstream,
        })
    }

    /// `0.5 * sum(w^2)` over weight matrices (biases and batch-norm affine
    /// parameters excluded).
    pub fn weight_penalty(&self) -> f64 {
        0.5 * self
            .layers
            .iter()
            .map(|l| l.weight.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
    }

    /// Visits every trainable tensor in canonical order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, ParamKind, &mut [f64])) {
        self.version = next_version();
        let mut idx = 0;
        for layer in self.layers.iter_mut() {
            f(
                idx,
                ParamKind::Weight,
                layer.weight.as_slice_mut().expect("standard layout"),
            );
            idx += 1;
            f(
                idx,
                ParamKind::Bias,
                layer.bias.as_slice_mut().expect("standard layout"),
            );
            idx += 1;
            if let Some(bn) = layer.batch_norm.as_mut() {
                f(idx, ParamKind::Gamma, bn.gamma.as_slice_mut().expect("standard layout"));
                idx += 1;
                f(idx, ParamKind::Beta, bn.beta.as_slice_mut().expect("standard layout"));
                idx += 1;
            }
        }
    }

    /// Human-readable name of the parameter tensor at canonical index `idx`.
    pub fn param_name(&self, idx: usize) -> String {
        let mut i = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            let names: &[&str] = if layer.batch_norm.is_some() {
                &["weight", "bias", "gamma", "beta"]
            } else {
                &["weight", "bias"]
            };
            for name in names {
                if i == idx {
                    return format!("layer {li} {name}");
                }
                i += 1;
            }
        }
        format!("tensor {idx}")
    }

    /// Element count of each parameter tensor in canonical order.
    pub fn param_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.len());
            out.push(l.bias.len());
            if let Some(bn) = &l.batch_norm {
                out.push(bn.gamma.len());
                out.push(bn.beta.len());
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len() + l.batch_norm.as_ref().map_or(0, |b| 2 * b.gamma.len()))
            .sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
            if let Some(bn) = &l.batch_norm {
                out.extend(bn.gamma.iter());
                out.extend(bn.beta.iter());
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                actual: values.len(),
            });
        }
        let mut offset = 0;
        self.for_each_param_mut(|_, _, p| {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let specs = [LayerSpec::new(4, 2, Activation::Identity, false)];
        let a = DenseNetwork::new(&specs, 7).unwrap();
        let b = DenseNetwork::new(&specs, 7).unwrap();
        assert_eq!(a.layers()[0].weight.dim(), (2, 4));
        assert_eq!(a.layers()[0].bias.len(), 2);
        assert_eq!(a.flat_params(), b.flat_params());
        let c = DenseNetwork::new(&specs, 8).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let specs = [
            LayerSpec::new(4, 3, Activation::Tanh, false),
            LayerSpec::new(2, 1, Activation::Tanh, false),
        ];
        assert!(matches!(DenseNetwork::new(&specs, 0), Err(Error::NetworkSpec(_))));
        assert!(DenseNetwork::new(&[], 0).is_err());
    }

    #[test]
    fn init_std_matches_scheme() {
        // 512 x 200 = 102400 draws
        let net = DenseNetwork::new(&[LayerSpec::new(512, 200, Activation::Identity, false)], 3).unwrap();
        let w = &net.layers()[0].weight;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        let nominal = DenseNetwork::init_std(512);
        assert!((std - nominal).abs() < 0.2 * nominal, "{std} vs {nominal}");
        assert!(mean.abs() < 0.1 * nominal);
    }

    #[test]
    fn identity_layer_is_identity() {
        let mut net = DenseNetwork::new(&[LayerSpec::new(3, 3, Activation::Identity, false)], 0).unwrap();
        net.layer_mut(0).weight = Array2::eye(3);
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(net.infer(x.view()).unwrap(), x);
    }

    #[test]
    fn tanh_output_in_open_interval() {
        let net = DenseNetwork::new(&[LayerSpec::new(2, 5, Activation::Tanh, false)], 1).unwrap();
        let x = array![[3.0, -3.0], [0.3, 0.1], [-5.0, 2.0]];
        let y = net.infer(x.view()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn hand_evaluated_leaky_net() {
        let mut net = DenseNetwork::new(&[LayerSpec::new(2, 2, Activation::LeakyRelu, false)], 0).unwrap();
        {
            let l = net.layer_mut(0);
            l.weight = array![[2.0, 1.0], [0.5, 3.0]];
            l.bias = array![0.25, -0.5];
        }
        // W x + b with x = (1, -1): (2 - 1 + 0.25, 0.5 - 3 - 0.5) = (1.25, -3.0)
        // leaky relu: (1.25, -0.03)
        let y = net.infer(array![[1.0, -1.0]].view()).unwrap();
        assert_eq!(y, array![[1.25, -3.0 * LEAKY_RELU_SLOPE]]);
    }

    #[test]
    fn batch_norm_training_needs_two_rows() {
        let net = DenseNetwork::new(&[LayerSpec::new(2, 2, Activation::Identity, true)], 0).unwrap();
        assert!(matches!(
            net.forward(array![[1.0, 2.0]].view(), Mode::Train),
            Err(Error::BatchSize(1))
        ));
        assert!(net.forward(array![[1.0, 2.0]].view(), Mode::Inference).is_ok());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let specs = chain(&[3, 4, 2], (Activation::LeakyRelu, true), (Activation::Tanh, false));
        let net = DenseNetwork::new(&specs, 5).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0], [0.0, 0.0, 1.0]];
        let (out, cache) = net.forward(x.view(), Mode::Train).unwrap();
        let g = net.backward(&cache, Array2::zeros(out.dim()).view()).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient_closed_form() {
        // L = sum((xW^T + b - y)^2): dW = 2 r^T x, db = 2 sum_rows r
        let mut net = DenseNetwork::new(&[LayerSpec::new(2, 1, Activation::Identity, false)], 0).unwrap();
        net.layer_mut(0).weight = array![[0.5, -1.0]];
        net.layer_mut(0).bias = array![0.1];
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.0, 1.0]];
        let y = array![[1.0], [0.0], [2.0]];
        let (out, cache) = net.forward(x.view(), Mode::Train).unwrap();
        let r = &out - &y;
        let g = net.backward(&cache, (&r * 2.0).view()).unwrap();
        let expected_w = r.t().dot(&x) * 2.0;
        let expected_b = r.sum_axis(Axis(0)) * 2.0;
        for (a, b) in g.layers[0].weight.iter().zip(expected_w.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((g.layers[0].bias[0] - expected_b[0]).abs() < 1e-14);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = DenseNetwork::new(&[LayerSpec::new(2, 2, Activation::Tanh, false)], 0).unwrap();
        let x = array![[1.0, 2.0], [0.0, 1.0]];
        let (out, cache) = net.forward(x.view(), Mode::Train).unwrap();
        net.layer_mut(0).bias[0] = 1.0;
        assert!(matches!(net.backward(&cache, out.view()), Err(Error::Cache(_))));
        let other = DenseNetwork::new(&[LayerSpec::new(2, 2, Activation::Tanh, false)], 0).unwrap();
        let (out, cache) = other.forward(x.view(), Mode::Train).unwrap();
        assert!(net.backward(&cache, out.view()).is_err());
    }

    #[test]
    fn running_mean_converges_monotonically() {
        let mut net = DenseNetwork::new(&[LayerSpec::new(2, 2, Activation::Identity, true)], 4).unwrap();
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [2.0, 4.0]];
        let z = x.dot(&net.layers()[0].weight.t());
        let target = z.mean_axis(Axis(0)).unwrap();
        let mut prev_gap: Vec<f64> = target.iter().map(|t| t.abs()).collect();
        for _ in 0..60 {
            net.forward_train(x.view()).unwrap();
            let rm = &net.layers()[0].batch_norm.as_ref().unwrap().running_mean;
            let gap: Vec<f64> = rm.iter().zip(target.iter()).map(|(r, t)| (r - t).abs()).collect();
            for (g, p) in gap.iter().zip(&prev_gap) {
                assert!(g <= p);
            }
            prev_gap = gap;
        }
        assert!(prev_gap.iter().all(|g| *g < 1e-2));
        assert!(net.layers()[0]
            .batch_norm
            .as_ref()
            .unwrap()
            .running_var
            .iter()
            .all(|v| *v >= 0.0));
    }

    #[test]
    fn inference_is_bit_reproducible() {
        let specs = chain(&[4, 8, 3], (Activation::LeakyRelu, true), (Activation::Identity, false));
        let mut net = DenseNetwork::new(&specs, 2).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        net.forward_train(x.view()).unwrap();
        let a = net.infer(x.view()).unwrap();
        let b = net.infer(x.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_params_round_trip() {
        let specs = chain(&[3, 4, 2], (Activation::LeakyRelu, true), (Activation::Tanh, false));
        let mut net = DenseNetwork::new(&specs, 9).unwrap();
        let mut p = net.flat_params();
        assert_eq!(p.len(), net.num_params());
        p[0] += 1.0;
        net.set_flat_params(&p).unwrap();
        assert_eq!(net.flat_params(), p);
        assert_eq!(net.param_name(2), "layer 0 gamma");
        assert_eq!(net.param_name(4), "layer 1 weight");
    }
}
