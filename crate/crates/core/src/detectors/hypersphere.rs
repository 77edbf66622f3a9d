//! Deep SVDD (one center), its soft-boundary variant, and the multi-class
//! extension with one frozen center per inlier subclass.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::autoencoder::{AutoencoderConfig, AutoencoderModel};
use super::training::{self, TrainLog, Trainable};
use crate::error::{Error, Result};
use crate::nn::{DenseNetwork, ForwardCache, GradientSet, Mode, Optimizer};
use crate::util;

/// Squared-distance objective variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SvddObjective {
    /// Mean squared distance to the center(s).
    OneClass,
    /// `R^2 + 1/(nu n) * sum max(0, d_i - R^2)` with `R` set by quantile
    /// search every few epochs.
    SoftBoundary { nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvddConfig {
    pub weight_decay: f64,
    /// Center coordinates closer to zero than this are pushed out to it.
    pub center_snap: f64,
    pub objective: SvddObjective,
    /// Epochs between radius updates (soft boundary only).
    pub radius_update_every: usize,
    /// Initialize the encoder from a trained autoencoder.
    pub pretrain: bool,
}

impl Default for SvddConfig {
    fn default() -> Self {
        Self {
            weight_decay: 0.5e-6,
            center_snap: 0.05,
            objective: SvddObjective::OneClass,
            radius_update_every: 5,
            pretrain: true,
        }
    }
}

impl SvddConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_decay >= 0.0) || !(self.center_snap >= 0.0) {
            return Err(Error::Config(
                "weight_decay and center_snap must be non-negative".into(),
            ));
        }
        if let SvddObjective::SoftBoundary { nu } = self.objective {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(Error::Config(format!("nu must lie in (0, 1], got {nu}")));
            }
            if self.radius_update_every == 0 {
                return Err(Error::Config("radius_update_every must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Pushes `|v| < eps` out to `±eps`, keeping the sign (zero goes to `+eps`).
pub fn snap(v: f64, eps: f64) -> f64 {
    if v.abs() < eps {
        if v < 0.0 {
            -eps
        } else {
            eps
        }
    } else {
        v
    }
}

/// Per-class means of `embeddings` (row `j` averages rows labelled `j`),
/// snapped away from zero.
pub fn centers_from_embeddings(
    embeddings: ArrayView2<f64>,
    labels: &[usize],
    class_names: &[String],
    snap_eps: f64,
) -> Result<Array2<f64>> {
    let m = class_names.len();
    let p = embeddings.ncols();
    let mut sums = Array2::<f64>::zeros((m, p));
    let mut counts = vec![0usize; m];
    for (row, &y) in embeddings.outer_iter().zip(labels) {
        if y >= m {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {m} classes"
            )));
        }
        sums.row_mut(y).scaled_add(1.0, &row);
        counts[y] += 1;
    }
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyClass(class_names[j].clone()));
        }
        sums.row_mut(j).mapv_inplace(|v| snap(v / c as f64, snap_eps));
    }
    Ok(sums)
}

/// Centers from inference-mode encoder outputs.
pub fn init_centers(
    encoder: &DenseNetwork,
    data: ArrayView2<f64>,
    labels: &[usize],
    class_names: &[String],
    snap_eps: f64,
) -> Result<Array2<f64>> {
    let emb = encoder.infer(data)?;
    centers_from_embeddings(emb.view(), labels, class_names, snap_eps)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/n) sum ||phi_i - c||^2` and its gradient with respect to `phi`.
pub fn one_class_loss(emb: ArrayView2<f64>, center: ArrayView1<f64>) -> (f64, Array2<f64>) {
    let n = emb.nrows() as f64;
    let diff = &emb - &center;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (value, diff * (2.0 / n))
}

/// `sum_j (1/N_j) sum_{y_i = j} ||phi_i - c_j||^2`. `counts` gives `N_j`;
/// when `None` the per-class counts of this batch are used, and classes
/// absent from the batch contribute nothing.
pub fn multi_class_loss(
    emb: ArrayView2<f64>,
    labels: &[usize],
    centers: ArrayView2<f64>,
    counts: Option<&[usize]>,
) -> (f64, Array2<f64>) {
    let batch_counts;
    let counts = match counts {
        Some(c) => c,
        None => {
            let mut c = vec![0usize; centers.nrows()];
            for &y in labels {
                c[y] += 1;
            }
            batch_counts = c;
            &batch_counts
        }
    };
    let mut grad = Array2::zeros(emb.dim());
    let mut per_class = vec![0.0; centers.nrows()];
    for (i, &y) in labels.iter().enumerate() {
        let diff = &emb.row(i) - &centers.row(y);
        per_class[y] += diff.iter().map(|d| d * d).sum::<f64>();
        grad.row_mut(i).assign(&(diff * (2.0 / counts[y] as f64)));
    }
    let value = per_class
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .sum();
    (value, grad)
}

/// `R^2 + (1/(nu n)) sum max(0, ||phi_i - c||^2 - R^2)`.
pub fn soft_boundary_loss(
    emb: ArrayView2<f64>,
    center: ArrayView1<f64>,
    radius_squared: f64,
    nu: f64,
) -> (f64, Array2<f64>) {
    let n = emb.nrows() as f64;
    let scale = 1.0 / (nu * n);
    let mut grad = Array2::zeros(emb.dim());
    let mut hinge = 0.0;
    for (i, row) in emb.outer_iter().enumerate() {
        let diff = &row - &center;
        let d = diff.iter().map(|v| v * v).sum::<f64>();
        if d > radius_squared {
            hinge += d - radius_squared;
            grad.row_mut(i).assign(&(diff * (2.0 * scale)));
        }
    }
    (radius_squared + scale * hinge, grad)
}

/// Line-search solution for `R^2` given fixed squared distances: the
/// `(1 - nu)` quantile (zero when `nu >= 1`).
pub fn radius_squared(sq_distances: &[f64], nu: f64) -> f64 {
    if nu >= 1.0 || sq_distances.is_empty() {
        return 0.0;
    }
    util::quantile(sq_distances, 1.0 - nu)
}

/// Squared distance of each row to its nearest center.
pub fn min_sq_distances(emb: ArrayView2<f64>, centers: ArrayView2<f64>) -> Vec<f64> {
    emb.outer_iter()
        .map(|row| {
            centers
                .outer_iter()
                .map(|c| sq_dist(row, c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Trace of the (population) covariance of the rows.
pub fn covariance_trace(emb: ArrayView2<f64>) -> f64 {
    if emb.nrows() == 0 {
        return 0.0;
    }
    let mean = emb.mean_axis(Axis(0)).expect("non-empty");
    let n = emb.nrows() as f64;
    emb.outer_iter().map(|r| sq_dist(r, mean.view())).sum::<f64>() / n
}

/// Below this covariance trace the embeddings count as collapsed.
pub const COLLAPSE_TRACE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypersphereModel {
    pub encoder: DenseNetwork,
    /// One row per center; frozen after initialization.
    pub centers: Array2<f64>,
    pub class_names: Vec<String>,
    /// Multi-class objective (one center per class) versus a single center.
    pub per_class: bool,
    pub objective: SvddObjective,
    /// `R^2`; zero for the one-class objective.
    pub radius_squared: f64,
    pub weight_decay: f64,
    pub radius_update_every: usize,
    /// Full-data class counts `N_j` of the training set.
    pub class_counts: Vec<usize>,
    pub collapse_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypersphereReport {
    pub pretrain: Option<TrainLog>,
    pub log: TrainLog,
}

impl HypersphereModel {
    pub fn new(
        encoder: DenseNetwork,
        centers: Array2<f64>,
        class_names: Vec<String>,
        per_class: bool,
        config: &SvddConfig,
    ) -> Result<Self> {
        if centers.ncols() != encoder.output_dim() || centers.nrows() != class_names.len() {
            return Err(Error::Shape {
                expected: encoder.output_dim(),
                actual: centers.ncols(),
            });
        }
        if !per_class && centers.nrows() != 1 {
            return Err(Error::InvalidArgument(
                "a single-center model needs exactly one center".into(),
            ));
        }
        Ok(Self {
            encoder,
            centers,
            class_names,
            per_class,
            objective: config.objective,
            radius_squared: 0.0,
            weight_decay: config.weight_decay,
            radius_update_every: config.radius_update_every,
            class_counts: Vec::new(),
            collapse_warning: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        self.encoder.infer(x)
    }

    /// Squared distance to the nearest center.
    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let emb = self.embed(x)?;
        Ok(min_sq_distances(emb.view(), self.centers.view()))
    }

    /// Data term of the objective for given embeddings.
    pub fn data_loss(&self, emb: ArrayView2<f64>, labels: &[usize], full_counts: bool) -> (f64, Array2<f64>) {
        if self.per_class {
            let counts = full_counts.then_some(self.class_counts.as_slice());
            return multi_class_loss(emb, labels, self.centers.view(), counts);
        }
        let c = self.centers.row(0);
        match self.objective {
            SvddObjective::OneClass => one_class_loss(emb, c),
            SvddObjective::SoftBoundary { nu } => soft_boundary_loss(emb, c, self.radius_squared, nu),
        }
    }

    /// Training-mode objective including weight decay, with data-term
    /// gradients (decay is applied by the optimizer).
    fn pass(&self, batch: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, GradientSet, ForwardCache)> {
        let (emb, cache) = self.encoder.forward(batch, Mode::Train)?;
        let (value, g) = self.data_loss(emb.view(), labels, false);
        let grads = self.encoder.backward(&cache, g.view())?;
        Ok((value + self.weight_decay * self.encoder.weight_penalty(), grads, cache))
    }

    pub fn objective(&self, batch: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        self.pass(batch, labels).map(|(l, _, _)| l)
    }

    /// Gradient of [`Self::objective`] including the decay term, flattened
    /// in canonical parameter order.
    pub fn objective_gradient(&self, batch: ArrayView2<f64>, labels: &[usize]) -> Result<GradientSet> {
        let (_, mut grads, _) = self.pass(batch, labels)?;
        for (g, layer) in grads.layers.iter_mut().zip(self.encoder.layers()) {
            g.weight.scaled_add(self.weight_decay, &layer.weight);
        }
        Ok(grads)
    }

    fn update_radius(&mut self, train: ArrayView2<f64>) -> Result<()> {
        if let SvddObjective::SoftBoundary { nu } = self.objective {
            let emb = self.encoder.infer(train)?;
            let d: Vec<f64> = emb.outer_iter().map(|r| sq_dist(r, self.centers.row(0))).collect();
            self.radius_squared = radius_squared(&d, nu);
        }
        Ok(())
    }
}

impl Trainable for HypersphereModel {
    fn train_step(
        &mut self,
        batch: &Array2<f64>,
        labels: &[usize],
        optimizer: &mut Optimizer,
        _rng: &mut util::Rng,
    ) -> Result<f64> {
        let (loss, grads, cache) = self.pass(batch.view(), labels)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        self.encoder.update_running_stats(&cache)?;
        optimizer.step(&mut self.encoder, &grads, self.weight_decay)?;
        Ok(loss)
    }

    fn eval_loss(&self, data: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let emb = self.encoder.infer(data)?;
        Ok(self.data_loss(emb.view(), labels, false).0 + self.weight_decay * self.encoder.weight_penalty())
    }

    fn end_epoch(&mut self, epoch: usize, train: ArrayView2<f64>, _labels: &[usize]) -> Result<()> {
        if (epoch + 1).is_multiple_of(self.radius_update_every.max(1)) {
            self.update_radius(train)?;
        }
        Ok(())
    }

    fn monitor(&self, train: ArrayView2<f64>) -> Result<Option<f64>> {
        let emb = self.encoder.infer(train)?;
        Ok(Some(covariance_trace(emb.view())))
    }
}

/// Trains Deep SVDD (`per_class = false`, labels ignored) or the
/// multi-class variant (`per_class = true`, one center per entry of
/// `class_names`). The encoder is pretrained as part of an autoencoder
/// built from `network`, whose training schedule is reused for the
/// hypersphere stage. Without validation rows a stratified share of
/// `train` is held out for early stopping and the collapse check.
#[allow(clippy::too_many_arguments)]
pub fn train_hypersphere(
    train: ArrayView2<f64>,
    labels: &[usize],
    class_names: &[String],
    validation: ArrayView2<f64>,
    validation_labels: &[usize],
    network: &AutoencoderConfig,
    config: &SvddConfig,
    per_class: bool,
    seed: u64,
) -> Result<(HypersphereModel, HypersphereReport)> {
    network.architecture.validate()?;
    network.training.validate()?;
    config.validate()?;
    let single = vec!["inliers".to_string()];
    let (labels, vlabels, names) = if per_class {
        (labels.to_vec(), validation_labels.to_vec(), class_names.to_vec())
    } else {
        (vec![0; train.nrows()], vec![0; validation.nrows()], single)
    };
    if labels.len() != train.nrows() || vlabels.len() != validation.nrows() {
        return Err(Error::Shape {
            expected: train.nrows(),
            actual: labels.len(),
        });
    }
    let (tr, trl, va, val) = if validation.nrows() > 0 {
        (train.to_owned(), labels, validation.to_owned(), vlabels)
    } else {
        training::holdout(
            train,
            &labels,
            network.training.validation_fraction,
            util::derive_seed(seed, &["holdout"]),
        )
    };

    let (encoder, pretrain) = if config.pretrain {
        let (ae, log) = AutoencoderModel::train(tr.view(), va.view(), network, util::derive_seed(seed, &["pretrain"]))?;
        (ae.encoder, Some(log))
    } else {
        let ae = AutoencoderModel::new(
            tr.ncols(),
            &network.architecture,
            util::derive_seed(seed, &["pretrain"]),
        )?;
        (ae.encoder, None)
    };
    let centers = init_centers(&encoder, tr.view(), &trl, &names, config.center_snap)?;
    let mut model = HypersphereModel::new(encoder, centers, names, per_class, config)?;
    let mut counts = vec![0usize; model.centers.nrows()];
    for &y in &trl {
        counts[y] += 1;
    }
    model.class_counts = counts;

    let log = training::fit(
        &mut model,
        tr.view(),
        &trl,
        va.view(),
        &val,
        &network.training,
        util::derive_seed(seed, &["svdd"]),
    )?;
    model.collapse_warning = collapse_check(&model, &log, va.view(), util::derive_seed(seed, &["probe"]))?;
    if let Some(w) = &model.collapse_warning {
        log::warn!("{w}");
    }
    Ok((model, HypersphereReport { pretrain, log }))
}

/// Raises the collapse alarm when the embedding covariance has vanished and
/// validation inliers are scored exactly like uniform noise.
fn collapse_check(
    model: &HypersphereModel,
    log: &TrainLog,
    validation: ArrayView2<f64>,
    seed: u64,
) -> Result<Option<String>> {
    let Some(&trace) = log.monitor.get(log.best_epoch) else {
        return Ok(None);
    };
    if trace >= COLLAPSE_TRACE || validation.nrows() == 0 {
        return Ok(None);
    }
    let mut rng = util::rng(seed);
    let probe = Array2::from_shape_simple_fn((64, model.dim()), || rng.random_range(-1.0..=1.0));
    let sv = util::mean(&model.score(validation)?);
    let sp = util::mean(&model.score(probe.view())?);
    if (sv - sp).abs() <= COLLAPSE_TRACE * sv.abs().max(1.0) {
        return Ok(Some(format!(
            "hypersphere collapse: embedding covariance trace {trace:.3e} and noise scores match validation scores"
        )));
    }
    Ok(None)
}

/// Exhaustive nearest-center oracle used by tests.
#[doc(hidden)]
pub fn brute_force_min(emb: ArrayView2<f64>, centers: ArrayView2<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..emb.nrows() {
        let mut best = f64::INFINITY;
        for j in 0..centers.nrows() {
            let mut d = 0.0;
            for k in 0..emb.ncols() {
                d += (emb[[i, k]] - centers[[j, k]]).powi(2);
            }
            if d < best {
                best = d;
            }
        }
        out.push(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use proptest::prelude::*;

    use super::*;
    use crate::detectors::autoencoder::Architecture;
    use crate::detectors::training::TrainingConfig;
    use crate::nn::{chain, check_gradient, Activation, Algorithm, LayerSpec};

    fn random(n: usize, d: usize, seed: u64, scale: f64) -> Array2<f64> {
        let mut rng = util::rng(seed);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-scale..scale))
    }

    fn identity_encoder(d: usize) -> DenseNetwork {
        let mut net = DenseNetwork::new(&[LayerSpec::new(d, d, Activation::Identity, false)], 0).unwrap();
        net.layer_mut(0).weight = Array2::eye(d);
        net.layer_mut(0).bias.fill(0.0);
        net
    }

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("class{j}")).collect()
    }

    fn small_config(objective: SvddObjective) -> SvddConfig {
        SvddConfig {
            objective,
            weight_decay: 1e-3,
            ..Default::default()
        }
    }

    fn small_model(per_class: bool, m: usize, objective: SvddObjective, seed: u64) -> HypersphereModel {
        let specs = chain(
            &[5, 7, 6, 4],
            (Activation::LeakyRelu, true),
            (Activation::Identity, false),
        );
        let enc = DenseNetwork::new(&specs, seed).unwrap();
        let centers = random(m, 4, seed + 100, 1.0);
        HypersphereModel::new(enc, centers, names(m), per_class, &small_config(objective)).unwrap()
    }

    #[test]
    fn center_of_identity_encoder_is_mean() {
        let enc = identity_encoder(2);
        let x = array![[1.0, 1.0], [3.0, 3.0]];
        let c = init_centers(&enc, x.view(), &[0, 0], &names(1), 0.05).unwrap();
        assert_eq!(c, array![[2.0, 2.0]]);
    }

    #[test]
    fn per_class_centers_use_only_their_rows() {
        let enc = identity_encoder(2);
        let x = array![[1.0, 1.0], [10.0, 0.0], [3.0, 3.0], [20.0, 4.0]];
        let c = init_centers(&enc, x.view(), &[0, 1, 0, 1], &names(2), 0.05).unwrap();
        assert_eq!(c, array![[2.0, 2.0], [15.0, 2.0]]);
    }

    #[test]
    fn snapping_rule() {
        assert_eq!(snap(0.001, 0.05), 0.05);
        assert_eq!(snap(-0.001, 0.05), -0.05);
        assert_eq!(snap(0.0, 0.05), 0.05);
        assert_eq!(snap(0.2, 0.05), 0.2);
        let enc = identity_encoder(1);
        let c = init_centers(&enc, array![[0.0], [0.002]].view(), &[0, 0], &names(1), 0.05).unwrap();
        assert_eq!(c[[0, 0]], 0.05);
    }

    #[test]
    fn empty_class_is_named() {
        let enc = identity_encoder(1);
        let err = init_centers(&enc, array![[1.0]].view(), &[0], &names(2), 0.05).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(ref n) if n == "class1"));
    }

    #[test]
    fn nearest_center_examples() {
        let centers = array![[0.0, 0.0], [10.0, 0.0]];
        assert_eq!(min_sq_distances(array![[1.0, 0.0]].view(), centers.view()), vec![1.0]);
        assert_eq!(min_sq_distances(array![[10.0, 0.0]].view(), centers.view()), vec![0.0]);
    }

    proptest! {
        #[test]
        fn nearest_center_matches_oracle_and_ignores_row_order(seed in 0u64..1000, m in 1usize..6, n in 1usize..20) {
            let emb = random(n, 3, seed, 5.0);
            let centers = random(m, 3, seed + 1, 5.0);
            let got = min_sq_distances(emb.view(), centers.view());
            prop_assert_eq!(&got, &brute_force_min(emb.view(), centers.view()));
            let rev: Vec<usize> = (0..m).rev().collect();
            let permuted = centers.select(Axis(0), &rev);
            prop_assert_eq!(got, min_sq_distances(emb.view(), permuted.view()));
        }
    }

    #[test]
    fn objectives_pass_gradient_checks() {
        let soft = SvddObjective::SoftBoundary { nu: 0.3 };
        for seed in 0..3 {
            let x = random(8, 5, 40 + seed, 1.0);
            let labels = [0, 1, 2, 0, 1, 2, 0, 0];
            let mut cases = vec![
                (small_model(false, 1, SvddObjective::OneClass, seed), vec![0; 8]),
                (small_model(true, 3, SvddObjective::OneClass, seed), labels.to_vec()),
            ];
            let mut s = small_model(false, 1, soft, seed);
            let emb = s.encoder.forward(x.view(), Mode::Train).unwrap().0;
            let d: Vec<f64> = emb.outer_iter().map(|r| sq_dist(r, s.centers.row(0))).collect();
            let mut sorted = d.clone();
            sorted.sort_by(f64::total_cmp);
            // radius halfway between two distances keeps the hinge away from its kink
            s.radius_squared = 0.5 * (sorted[3] + sorted[4]);
            cases.push((s, vec![0; 8]));
            for (model, y) in cases {
                let g = model.objective_gradient(x.view(), &y).unwrap().flatten();
                let mut probe = model.clone();
                let report = check_gradient(
                    &model.encoder.flat_params(),
                    &g,
                    |p| {
                        probe.encoder.set_flat_params(p).unwrap();
                        probe.objective(x.view(), &y).unwrap()
                    },
                    1e-5,
                );
                assert!(report.passed, "{:?}: {report:?}", model.objective);
            }
        }
    }

    #[test]
    fn single_class_multi_loss_equals_one_class_loss() {
        let emb = random(9, 4, 1, 2.0);
        let c = random(1, 4, 2, 1.0);
        let (a, ga) = one_class_loss(emb.view(), c.row(0));
        let (b, gb) = multi_class_loss(emb.view(), &[0; 9], c.view(), None);
        assert!((a - b).abs() < 1e-12);
        assert!((ga - gb).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn class_permutation_leaves_loss_unchanged() {
        let emb = random(12, 3, 3, 2.0);
        let centers = random(3, 3, 4, 1.0);
        let labels: Vec<usize> = (0..12).map(|i| (i * 7) % 3).collect();
        let perm = [2, 0, 1];
        let permuted_labels: Vec<usize> = labels.iter().map(|&y| perm[y]).collect();
        let mut permuted_centers = Array2::zeros((3, 3));
        for (j, &pj) in perm.iter().enumerate() {
            permuted_centers.row_mut(pj).assign(&centers.row(j));
        }
        let (a, _) = multi_class_loss(emb.view(), &labels, centers.view(), None);
        let (b, _) = multi_class_loss(emb.view(), &permuted_labels, permuted_centers.view(), None);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn absent_class_contributes_nothing() {
        let emb = array![[1.0, 0.0], [3.0, 0.0]];
        let centers = array![[0.0, 0.0], [100.0, 0.0]];
        let (v, g) = multi_class_loss(emb.view(), &[0, 0], centers.view(), None);
        assert!((v - 5.0).abs() < 1e-12);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn radius_quantile_on_hand_made_list() {
        let d2: Vec<f64> = (1..=100).map(|k| (k * k) as f64).collect();
        let r2 = radius_squared(&d2, 0.1);
        // position 0.9 * 99 = 89.1 between 90^2 and 91^2
        assert!((r2 - (8100.0 + 0.1 * 181.0)).abs() < 1e-9);
        let outside = d2.iter().filter(|&&d| d > r2).count() as f64 / 100.0;
        assert!(outside <= 0.1 + 1.0 / 100.0);
        assert_eq!(radius_squared(&d2, 1.0), 0.0);
    }

    #[test]
    fn nu_one_reduces_to_mean_distance() {
        let emb = random(10, 3, 5, 2.0);
        let c = random(1, 3, 6, 1.0);
        let (a, ga) = one_class_loss(emb.view(), c.row(0));
        let (b, gb) = soft_boundary_loss(emb.view(), c.row(0), 0.0, 1.0);
        assert!((a - b).abs() < 1e-12);
        assert!((ga - gb).iter().all(|v| v.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn radius_update_bounds_outside_fraction(seed in 0u64..500, n in 5usize..200, nu in 0.01f64..0.99) {
            let mut rng = util::rng(seed);
            let d2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let r2 = radius_squared(&d2, nu);
            let outside = d2.iter().filter(|&&d| d > r2).count() as f64 / n as f64;
            prop_assert!(outside <= nu + 1.0 / n as f64);
        }
    }

    #[test]
    fn full_batch_descent_is_monotone() {
        let mut model = small_model(false, 1, SvddObjective::OneClass, 9);
        model.weight_decay = 0.5e-6;
        let x = random(64, 5, 50, 1.0);
        let y = vec![0; 64];
        let mut opt = Optimizer::new(Algorithm::Sgd, 1e-3);
        let mut prev = model.objective(x.view(), &y).unwrap();
        for it in 0..50 {
            let (_, grads, _) = model.pass(x.view(), &y).unwrap();
            opt.step(&mut model.encoder, &grads, model.weight_decay).unwrap();
            let cur = model.objective(x.view(), &y).unwrap();
            assert!(cur <= prev, "iteration {it}: {cur} > {prev}");
            prev = cur;
        }
    }

    fn tiny_network(epochs: usize) -> AutoencoderConfig {
        AutoencoderConfig {
            architecture: Architecture {
                hidden: vec![8, 6],
                latent: 3,
            },
            training: TrainingConfig {
                learning_rate: 1e-3,
                batch_size: 16,
                max_epochs: epochs,
                patience: epochs,
                ..Default::default()
            },
        }
    }

    #[test]
    fn identical_training_points_score_below_any_probe() {
        // constant inputs give zero batch variance; the inference-mode running
        // statistics need a few hundred steps to catch up with training mode
        let x = Array2::from_elem((40, 4), 0.3);
        let empty = Array2::zeros((0, 4));
        let (model, report) = train_hypersphere(
            x.view(),
            &[],
            &[],
            empty.view(),
            &[],
            &tiny_network(400),
            &SvddConfig::default(),
            false,
            1,
        )
        .unwrap();
        let penalty = model.weight_decay * model.encoder.weight_penalty();
        let last = *report.log.validation_losses.last().unwrap();
        assert!(last - penalty < 1e-3, "data term {} remains", last - penalty);
        let s_train = model.score(x.slice(ndarray::s![0..1, ..])).unwrap()[0];
        let s_probe = model.score(array![[-0.5, 0.9, 0.1, -0.2]].view()).unwrap()[0];
        assert!(s_probe > s_train);
    }

    #[test]
    fn single_class_trajectories_coincide() {
        let x = random(60, 4, 7, 1.0);
        let empty = Array2::zeros((0, 4));
        let (net, cfg) = (tiny_network(8), SvddConfig::default());
        let (a, ra) = train_hypersphere(x.view(), &[], &[], empty.view(), &[], &net, &cfg, false, 3).unwrap();
        let (b, rb) = train_hypersphere(x.view(), &[0; 60], &names(1), empty.view(), &[], &net, &cfg, true, 3).unwrap();
        assert_eq!(ra.log.batch_losses.len(), rb.log.batch_losses.len());
        for (u, v) in ra.log.batch_losses.iter().zip(&rb.log.batch_losses) {
            assert!((u - v).abs() <= 1e-12);
        }
        assert_eq!(a.centers, b.centers);
        assert_eq!(ra.log.monitor.len(), 8);
    }

    #[test]
    fn soft_boundary_training_sets_radius() {
        let x = random(80, 4, 8, 1.0);
        let empty = Array2::zeros((0, 4));
        let mut net = tiny_network(10);
        net.training.patience = 100;
        let cfg = SvddConfig {
            objective: SvddObjective::SoftBoundary { nu: 0.1 },
            ..Default::default()
        };
        let (model, _) = train_hypersphere(x.view(), &[], &[], empty.view(), &[], &net, &cfg, false, 4).unwrap();
        assert!(model.radius_squared > 0.0);
        let s = model.score(x.view()).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_input_width_is_rejected() {
        let model = small_model(true, 2, SvddObjective::OneClass, 1);
        assert!(model.score(random(2, 3, 1, 1.0).view()).is_err());
    }
}
