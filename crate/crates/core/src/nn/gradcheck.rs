//! Central finite-difference gradient checks.

use ndarray::{Array2, ArrayView2};

use super::network::{DenseNetwork, Mode};
use crate::error::Result;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`
/// so that exactly-zero gradients do not blow up the ratio.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the entry with the largest relative error.
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        let (worst_rel, worst_index) = if other.max_rel_error > self.max_rel_error {
            (other.max_rel_error, self.checked + other.worst_index)
        } else {
            (self.max_rel_error, self.worst_index)
        };
        let tolerance = self.tolerance.min(other.tolerance);
        GradCheckReport {
            max_rel_error: worst_rel,
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            worst_index,
            checked: self.checked + other.checked,
            tolerance,
            passed: worst_rel < tolerance,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `x0`.
pub fn check_gradient(
    x0: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(x0.len(), analytic.len(), "gradient length mismatch");
    let mut x = x0.to_vec();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut worst = 0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let plus = f(&x);
        x[i] = orig - FD_STEP;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let rel = relative_error(analytic[i], numeric);
        let abs = (analytic[i] - numeric).abs();
        if rel > max_rel || rel.is_nan() {
            max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
            worst = i;
        }
        max_abs = max_abs.max(abs);
    }
    GradCheckReport {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        worst_index: worst,
        checked: x.len(),
        tolerance,
        passed: max_rel < tolerance,
    }
}

/// Checks parameter and input gradients of `loss(net(batch))` for a
/// training-mode forward pass on a fixed batch. `loss` returns the scalar
/// value and its gradient with respect to the network output.
pub fn grad_check<L>(net: &DenseNetwork, batch: ArrayView2<f64>, loss: L, tolerance: f64) -> Result<GradCheckReport>
where
    L: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    let (out, cache) = net.forward(batch, Mode::Train)?;
    let (_, grad_out) = loss(&out);
    let grads = net.backward(&cache, grad_out.view())?;
    Ok(check_network_gradients(
        net,
        batch,
        &grads.flatten(),
        grads.input.as_slice(),
        &loss,
        tolerance,
    ))
}

/// Same as [`grad_check`] but with externally supplied analytic gradients,
/// e.g. deliberately corrupted ones.
pub fn check_network_gradients<L>(
    net: &DenseNetwork,
    batch: ArrayView2<f64>,
    param_grads: &[f64],
    input_grads: Option<&[f64]>,
    loss: &L,
    tolerance: f64,
) -> GradCheckReport
where
    L: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    let mut probe = net.clone();
    let report = check_gradient(
        &net.flat_params(),
        param_grads,
        |p| {
            probe.set_flat_params(p).expect("same length");
            let (out, _) = probe.forward(batch, Mode::Train).expect("forward");
            loss(&out).0
        },
        tolerance,
    );
    let Some(input_grads) = input_grads else {
        return report;
    };
    let shape = batch.dim();
    let input_report = check_gradient(
        batch.to_owned().as_slice().expect("standard layout"),
        input_grads,
        |x| {
            let xb = ArrayView2::from_shape(shape, x).expect("shape");
            let (out, _) = net.forward(xb, Mode::Train).expect("forward");
            loss(&out).0
        },
        tolerance,
    );
    report.merge(input_report)
}

/// Mean squared error over all entries and its gradient.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = pred.len() as f64;
    let diff = pred - target;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (value, diff * (2.0 / n))
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use rand::Rng as _;

    use super::*;
    use crate::nn::network::{chain, Activation, LayerSpec};
    use crate::util;

    fn random_batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = util::rng(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_net_squared_error() {
        let net = DenseNetwork::new(&[LayerSpec::new(4, 3, Activation::Identity, false)], 1).unwrap();
        let x = random_batch(6, 4, 2);
        let y = random_batch(6, 3, 3);
        let report = grad_check(&net, x.view(), |o| mse_loss(o, &y), 1e-7).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn batch_norm_net() {
        for seed in 0..5 {
            let specs = chain(&[5, 7, 6, 3], (Activation::LeakyRelu, true), (Activation::Tanh, false));
            let net = DenseNetwork::new(&specs, seed).unwrap();
            let x = random_batch(8, 5, 10 + seed);
            let y = random_batch(8, 3, 20 + seed);
            let report = grad_check(&net, x.view(), |o| mse_loss(o, &y), 1e-5).unwrap();
            assert!(report.passed, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let specs = chain(&[3, 4, 2], (Activation::Tanh, true), (Activation::Identity, false));
        let net = DenseNetwork::new(&specs, 4).unwrap();
        let x = random_batch(5, 3, 5);
        let y = random_batch(5, 2, 6);
        let loss = |o: &Array2<f64>| mse_loss(o, &y);
        let (out, cache) = net.forward(x.view(), Mode::Train).unwrap();
        let g = net.backward(&cache, loss(&out).1.view()).unwrap();
        let mut flat = g.flatten();
        flat[3] += 0.05;
        let report = check_network_gradients(&net, x.view(), &flat, None, &loss, 1e-5);
        assert!(!report.passed);
        assert_eq!(report.worst_index, 3);
    }
}
