//! Leave-one-subclass-out cross-validation.

use serde::{Deserialize, Serialize};

use super::metrics::{auroc, welch_p_value};
use crate::data::{build_cv_scenario, stratified_kfold, stratified_split, Dataset, QuantileNormalizer, Scenario};
use crate::detectors::{DetectorConfig, DetectorKind, FitReport, FittedDetector};
use crate::error::{Error, Result};
use crate::util;

/// Anything that can be trained on a scenario and score its TS2 rows.
pub trait ScenarioDetector: Sync {
    /// Stable identifier; enters the per-fold seed.
    fn name(&self) -> String;

    /// Trains on `scenario.train` and returns one score per TS2 row. When
    /// `normalizer` is given it replaces the per-scenario fit.
    fn fit_score(&self, scenario: &Scenario, normalizer: Option<&QuantileNormalizer>, seed: u64)
        -> Result<ScenarioFit>;
}

pub struct ScenarioFit {
    pub scores: Vec<f64>,
    pub fitted: Option<FittedDetector>,
    pub report: FitReport,
}

/// One of the built-in detectors with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub config: DetectorConfig,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind, config: DetectorConfig) -> Self {
        Self { kind, config }
    }
}

impl ScenarioDetector for DetectorSpec {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn fit_score(
        &self,
        scenario: &Scenario,
        normalizer: Option<&QuantileNormalizer>,
        seed: u64,
    ) -> Result<ScenarioFit> {
        let (fitted, report) = match normalizer {
            Some(n) => FittedDetector::fit_with_normalizer(
                n.clone(),
                self.kind,
                &self.config,
                &scenario.train,
                &scenario.validation,
                seed,
            )?,
            None => FittedDetector::fit(self.kind, &self.config, &scenario.train, &scenario.validation, seed)?,
        };
        let scores = fitted.score_dataset(&scenario.ts2)?;
        Ok(ScenarioFit {
            scores,
            fitted: Some(fitted),
            report,
        })
    }
}

/// Where the quantile normalizer is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizerScope {
    /// On each fold's training rows.
    #[default]
    PerFold,
    /// Once on all inlier rows of the 80% training split.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvOptions {
    pub folds: usize,
    pub test_fraction: f64,
    pub outlier_fraction: f64,
    pub normalizer: NormalizerScope,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            test_fraction: 0.2,
            outlier_fraction: crate::data::DEFAULT_OUTLIER_FRACTION,
            normalizer: NormalizerScope::PerFold,
        }
    }
}

impl CvOptions {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        if !(self.outlier_fraction > 0.0 && self.outlier_fraction < 1.0) {
            return Err(Error::Config("outlier_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-fold AUROC of one detector on one held-out subclass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub detector: String,
    pub top_class: String,
    pub outlier_subclass: String,
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over folds.
    pub std: f64,
}

impl EvalResult {
    pub fn from_folds(detector: &str, top_class: &str, outlier_subclass: &str, folds: Vec<f64>) -> Self {
        Self {
            detector: detector.to_string(),
            top_class: top_class.to_string(),
            outlier_subclass: outlier_subclass.to_string(),
            mean: util::mean(&folds),
            std: util::sample_std(&folds),
            folds,
        }
    }
}

/// Two-sided Welch test on the fold AUROCs of two results.
pub fn compare(a: &EvalResult, b: &EvalResult) -> Result<f64> {
    welch_p_value(&a.folds, &b.folds)
}

/// Fits and scores one scenario; returns the TS2 AUROC.
pub fn run_scenario(
    detector: &dyn ScenarioDetector,
    scenario: &Scenario,
    normalizer: Option<&QuantileNormalizer>,
    seed: u64,
) -> Result<f64> {
    run_scenario_detailed(detector, scenario, normalizer, seed).map(|(a, _)| a)
}

pub fn run_scenario_detailed(
    detector: &dyn ScenarioDetector,
    scenario: &Scenario,
    normalizer: Option<&QuantileNormalizer>,
    seed: u64,
) -> Result<(f64, ScenarioFit)> {
    let label = || {
        format!(
            "{} on {}/{} fold {}",
            detector.name(),
            scenario.top_class,
            scenario.outlier_subclass,
            scenario.fold_index
        )
    };
    let fit = detector
        .fit_score(scenario, normalizer, seed)
        .map_err(|e| e.context(label()))?;
    let a = auroc(&fit.scores, &scenario.ts2_outlier).map_err(|e| e.context(label()))?;
    Ok((a, fit))
}

/// Seed of the detector fit for one cell and fold.
pub fn fold_seed(master: u64, detector: &str, top_class: &str, subclass: &str, fold: usize) -> u64 {
    util::derive_seed(master, &[detector, top_class, subclass, &fold.to_string()])
}

/// The train/test split and folds shared by every detector and cell, so
/// that all detectors see identical data.
pub struct CvPlan {
    pub train: Dataset,
    pub test: Dataset,
    pub folds: Vec<(Dataset, Dataset)>,
    pub master_seed: u64,
    pub options: CvOptions,
}

impl CvPlan {
    pub fn new(dataset: &Dataset, options: &CvOptions, master_seed: u64) -> Result<Self> {
        options.validate()?;
        let (train, test) = stratified_split(
            dataset,
            options.test_fraction,
            util::derive_seed(master_seed, &["split"]),
        )?;
        let folds = stratified_kfold(&train, options.folds, util::derive_seed(master_seed, &["kfold"]))?;
        Ok(Self {
            train,
            test,
            folds,
            master_seed,
            options: options.clone(),
        })
    }

    pub fn scenario(&self, top_class: &str, subclass: &str, fold: usize) -> Result<Scenario> {
        let (fold_train, fold_val) = self
            .folds
            .get(fold)
            .ok_or_else(|| Error::InvalidArgument(format!("fold {fold} out of range")))?;
        let seed = util::derive_seed(self.master_seed, &["ts2", top_class, subclass, &fold.to_string()]);
        build_cv_scenario(
            fold_train,
            fold_val,
            &self.test,
            top_class,
            subclass,
            self.options.outlier_fraction,
            seed,
            fold,
        )
    }

    /// Normalizer fitted once per cell when the scope is global.
    pub fn global_normalizer(
        &self,
        top_class: &str,
        subclass: &str,
        n_quantiles: usize,
    ) -> Result<Option<QuantileNormalizer>> {
        if self.options.normalizer != NormalizerScope::Global {
            return Ok(None);
        }
        let inliers = self
            .train
            .filter(|s| s.top_class == top_class && s.subclass != subclass);
        QuantileNormalizer::fit(&inliers, n_quantiles).map(Some)
    }
}

/// k-fold evaluation of one detector with `subclass` held out of `top_class`.
pub fn run_cv(
    detector: &dyn ScenarioDetector,
    dataset: &Dataset,
    top_class: &str,
    subclass: &str,
    options: &CvOptions,
    n_quantiles: usize,
    master_seed: u64,
) -> Result<EvalResult> {
    dataset.taxonomy().check_pair(top_class, subclass)?;
    let plan = CvPlan::new(dataset, options, master_seed)?;
    let normalizer = plan.global_normalizer(top_class, subclass, n_quantiles)?;
    let name = detector.name();
    let folds = (0..options.folds)
        .map(|f| {
            let scenario = plan.scenario(top_class, subclass, f)?;
            let seed = fold_seed(master_seed, &name, top_class, subclass, f);
            run_scenario(detector, &scenario, normalizer.as_ref(), seed)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalResult::from_folds(&name, top_class, subclass, folds))
}
