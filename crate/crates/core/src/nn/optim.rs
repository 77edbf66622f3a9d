use serde::{Deserialize, Serialize};

use super::network::{DenseNetwork, GradientSet, ParamKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Algorithm {
    pub fn adam() -> Self {
        Algorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer over one or more networks. Moment buffers are
/// allocated on the first step and must stay shape-congruent afterwards.
#[derive(Debug, Clone)]
pub struct Optimizer {
    algorithm: Algorithm,
    lr: f64,
    steps: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(algorithm: Algorithm, lr: f64) -> Self {
        Self {
            algorithm,
            lr,
            steps: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, net: &mut DenseNetwork, grads: &GradientSet, weight_decay: f64) -> Result<()> {
        self.step_many(&mut [net], &[grads], weight_decay)
    }

    /// One update of every network in `nets` with the matching gradients.
    /// Weight decay adds `weight_decay * w` to weight-matrix gradients only.
    pub fn step_many(
        &mut self,
        nets: &mut [&mut DenseNetwork],
        grads: &[&GradientSet],
        weight_decay: f64,
    ) -> Result<()> {
        if nets.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} networks but {} gradient sets",
                nets.len(),
                grads.len()
            )));
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }

        // validate everything before touching any parameter
        let mut tensors: Vec<(&[f64], ParamKind)> = Vec::new();
        for (ni, (net, g)) in nets.iter().zip(grads).enumerate() {
            let gt = g.tensors();
            let sizes = net.param_sizes();
            if sizes.len() != gt.len() || sizes.iter().zip(&gt).any(|(s, (t, _))| *s != t.len()) {
                return Err(Error::Shape {
                    expected: net.num_params(),
                    actual: gt.iter().map(|(t, _)| t.len()).sum(),
                });
            }
            for (ti, (t, _)) in gt.iter().enumerate() {
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient(format!("network {ni} {}", net.param_name(ti))));
                }
            }
            tensors.extend(gt);
        }

        if let Algorithm::Adam { .. } = self.algorithm {
            if self.first_moment.is_empty() {
                self.first_moment = tensors.iter().map(|(t, _)| vec![0.0; t.len()]).collect();
                self.second_moment = self.first_moment.clone();
            } else if self.first_moment.len() != tensors.len()
                || self
                    .first_moment
                    .iter()
                    .zip(&tensors)
                    .any(|(m, (t, _))| m.len() != t.len())
            {
                return Err(Error::InvalidArgument(
                    "optimizer state is not congruent with the parameters".into(),
                ));
            }
        }

        self.steps += 1;
        let lr = self.lr;
        let step = self.steps as f64;
        let mut flat_index = 0;
        for (net, g) in nets.iter_mut().zip(grads) {
            let gt = g.tensors();
            net.for_each_param_mut(|ti, kind, params| {
                let (grad, _) = gt[ti];
                let decay = if kind == ParamKind::Weight { weight_decay } else { 0.0 };
                match self.algorithm {
                    Algorithm::Sgd => {
                        for (p, g) in params.iter_mut().zip(grad) {
                            *p -= lr * (g + decay * *p);
                        }
                    }
                    Algorithm::Adam { beta1, beta2, eps } => {
                        let m = &mut self.first_moment[flat_index];
                        let v = &mut self.second_moment[flat_index];
                        let c1 = 1.0 - beta1.powf(step);
                        let c2 = 1.0 - beta2.powf(step);
                        for i in 0..params.len() {
                            let gi = grad[i] + decay * params[i];
                            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                            let mhat = m[i] / c1;
                            let vhat = v[i] / c2;
                            params[i] -= lr * mhat / (vhat.sqrt() + eps);
                        }
                    }
                }
                flat_index += 1;
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;
    use crate::nn::network::{Activation, LayerSpec, Mode};

    fn scalar_net(w: f64) -> DenseNetwork {
        let mut net = DenseNetwork::new(&[LayerSpec::new(1, 1, Activation::Identity, false)], 0).unwrap();
        net.layer_mut(0).weight = array![[w]];
        net
    }

    fn grads_for(net: &DenseNetwork, gw: f64, gb: f64) -> GradientSet {
        let (_, cache) = net.forward(array![[1.0]].view(), Mode::Train).unwrap();
        let mut g = net.backward(&cache, array![[0.0]].view()).unwrap();
        g.layers[0].weight = array![[gw]];
        g.layers[0].bias = array![gb];
        g
    }

    #[test]
    fn one_sgd_step() {
        let mut net = scalar_net(1.0);
        let g = grads_for(&net, 1.0, 0.0);
        Optimizer::new(Algorithm::Sgd, 0.1).step(&mut net, &g, 0.0).unwrap();
        assert!((net.layers()[0].weight[[0, 0]] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step_shrinks_weights_not_biases() {
        let mut net = scalar_net(2.0);
        net.layer_mut(0).bias = array![3.0];
        let g = grads_for(&net, 0.0, 0.0);
        let (lr, lambda) = (0.1, 0.5);
        Optimizer::new(Algorithm::Sgd, lr).step(&mut net, &g, lambda).unwrap();
        assert!((net.layers()[0].weight[[0, 0]] - 2.0 * (1.0 - lr * lambda)).abs() < 1e-15);
        assert_eq!(net.layers()[0].bias[0], 3.0);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let specs = crate::nn::chain(&[3, 4, 2], (Activation::LeakyRelu, true), (Activation::Tanh, false));
        let mut net = DenseNetwork::new(&specs, 1).unwrap();
        let before = net.flat_params();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let (out, cache) = net.forward(x.view(), Mode::Train).unwrap();
        let g = net.backward(&cache, Array2::zeros(out.dim()).view()).unwrap();
        for alg in [Algorithm::Sgd, Algorithm::adam()] {
            let mut opt = Optimizer::new(alg, 0.1);
            opt.step(&mut net, &g, 0.0).unwrap();
            assert_eq!(net.flat_params(), before);
        }
    }

    #[test]
    fn adam_reference_recurrence_on_quadratic_bowl() {
        // reference: scalar Adam on f(w) = w^2 written out directly
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.05);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!(w.abs() < 0.01, "reference recurrence ends at {w}");

        let mut net = scalar_net(1.0);
        let mut opt = Optimizer::new(Algorithm::adam(), lr);
        for _ in 0..200 {
            let wcur = net.layers()[0].weight[[0, 0]];
            let g = grads_for(&net, 2.0 * wcur, 0.0);
            opt.step(&mut net, &g, 0.0).unwrap();
        }
        let got = net.layers()[0].weight[[0, 0]];
        assert!(got.abs() < 0.01);
        assert!((got - w).abs() < 1e-12);
        assert_eq!(opt.steps(), 200);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut net = scalar_net(1.0);
        let g = grads_for(&net, 0.0, f64::NAN);
        let err = Optimizer::new(Algorithm::Sgd, 0.1).step(&mut net, &g, 0.0).unwrap_err();
        assert!(err.to_string().contains("layer 0 bias"), "{err}");
        assert_eq!(net.layers()[0].weight[[0, 0]], 1.0);
    }
}
