//! The six detectors behind one fit/score contract: higher score means
//! more anomalous.

pub mod autoencoder;
pub mod hypersphere;
pub mod iforest;
pub mod ocsvm;
pub mod training;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use autoencoder::{Architecture, AutoencoderConfig, AutoencoderModel, VaeConfig, VaeModel};
pub use hypersphere::{HypersphereModel, SvddConfig, SvddObjective};
pub use iforest::{IForestConfig, IForestModel};
pub use ocsvm::{Gamma, OcsvmConfig, OcsvmModel};
pub use training::{TrainLog, TrainingConfig};

use crate::data::{Dataset, QuantileNormalizer, DEFAULT_N_QUANTILES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    IForest,
    Ocsvm,
    Ae,
    Vae,
    Dsvdd,
    Mcdsvdd,
}

impl DetectorKind {
    /// Report order.
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::IForest,
        DetectorKind::Ocsvm,
        DetectorKind::Ae,
        DetectorKind::Vae,
        DetectorKind::Dsvdd,
        DetectorKind::Mcdsvdd,
    ];

    /// Identifier used in configs and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::IForest => "iforest",
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Ae => "ae",
            DetectorKind::Vae => "vae",
            DetectorKind::Dsvdd => "dsvdd",
            DetectorKind::Mcdsvdd => "mcdsvdd",
        }
    }

    /// Row label in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::IForest => "IForest",
            DetectorKind::Ocsvm => "OCSVM",
            DetectorKind::Ae => "AE",
            DetectorKind::Vae => "VAE",
            DetectorKind::Dsvdd => "DeepSVDD",
            DetectorKind::Mcdsvdd => "MCDSVDD",
        }
    }

    pub fn is_deep(self) -> bool {
        !matches!(self, DetectorKind::IForest | DetectorKind::Ocsvm)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || k.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown detector {s:?}; expected one of iforest, ocsvm, ae, vae, dsvdd, mcdsvdd"
                ))
            })
    }
}

/// Hyperparameters for every detector. The deep detectors share the
/// network shape and training schedule; Deep SVDD variants pretrain an
/// autoencoder with exactly these settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub n_quantiles: usize,
    pub architecture: Architecture,
    pub training: TrainingConfig,
    pub vae_score_samples: usize,
    pub svdd: SvddConfig,
    pub iforest: IForestConfig,
    pub ocsvm: OcsvmConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            n_quantiles: DEFAULT_N_QUANTILES,
            architecture: Architecture::default(),
            training: TrainingConfig::default(),
            vae_score_samples: 10,
            svdd: SvddConfig::default(),
            iforest: IForestConfig::default(),
            ocsvm: OcsvmConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn autoencoder(&self) -> AutoencoderConfig {
        AutoencoderConfig {
            architecture: self.architecture.clone(),
            training: self.training.clone(),
        }
    }

    pub fn vae(&self) -> VaeConfig {
        VaeConfig {
            architecture: self.architecture.clone(),
            training: self.training.clone(),
            score_samples: self.vae_score_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_quantiles < 2 {
            return Err(Error::Config("n_quantiles must be at least 2".into()));
        }
        if self.vae_score_samples == 0 {
            return Err(Error::Config("vae_score_samples must be at least 1".into()));
        }
        self.architecture.validate()?;
        self.training.validate()?;
        self.svdd.validate()
    }
}

/// Fitted detector payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum DetectorModel {
    IForest(IForestModel),
    Ocsvm(OcsvmModel),
    Ae(AutoencoderModel),
    Vae(VaeModel),
    Dsvdd(HypersphereModel),
    Mcdsvdd(HypersphereModel),
}

/// Training diagnostics; empty for the shallow detectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_log: Option<TrainLog>,
    pub pretrain_log: Option<TrainLog>,
    /// Best validation loss reached by the deep detectors.
    pub validation_loss: Option<f64>,
    /// Embedding covariance trace per epoch (hypersphere models).
    pub collapse_trace: Vec<f64>,
    pub collapse_warning: Option<String>,
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::IForest(_) => DetectorKind::IForest,
            DetectorModel::Ocsvm(_) => DetectorKind::Ocsvm,
            DetectorModel::Ae(_) => DetectorKind::Ae,
            DetectorModel::Vae(_) => DetectorKind::Vae,
            DetectorModel::Dsvdd(_) => DetectorKind::Dsvdd,
            DetectorModel::Mcdsvdd(_) => DetectorKind::Mcdsvdd,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DetectorModel::IForest(m) => m.dim,
            DetectorModel::Ocsvm(m) => m.dim(),
            DetectorModel::Ae(m) => m.dim(),
            DetectorModel::Vae(m) => m.dim(),
            DetectorModel::Dsvdd(m) | DetectorModel::Mcdsvdd(m) => m.dim(),
        }
    }

    /// Fits on already-normalized rows. `labels` index `class_names` and are
    /// only used by the multi-class detector (and for stratified holdouts).
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        kind: DetectorKind,
        config: &DetectorConfig,
        train: ArrayView2<f64>,
        labels: &[usize],
        class_names: &[String],
        validation: ArrayView2<f64>,
        validation_labels: &[usize],
        seed: u64,
    ) -> Result<(Self, FitReport)> {
        config.validate()?;
        if train.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 training rows, got {}",
                train.nrows()
            )));
        }
        let deep_report = |log: TrainLog| FitReport {
            validation_loss: Some(log.best_validation_loss),
            train_log: Some(log),
            ..Default::default()
        };
        Ok(match kind {
            DetectorKind::IForest => (
                DetectorModel::IForest(IForestModel::fit(train, &config.iforest, seed)?),
                FitReport::default(),
            ),
            DetectorKind::Ocsvm => (
                DetectorModel::Ocsvm(OcsvmModel::fit(train, &config.ocsvm)?),
                FitReport::default(),
            ),
            DetectorKind::Ae => {
                let (m, log) = AutoencoderModel::train(train, validation, &config.autoencoder(), seed)?;
                (DetectorModel::Ae(m), deep_report(log))
            }
            DetectorKind::Vae => {
                let (m, log) = VaeModel::train(train, validation, &config.vae(), seed)?;
                (DetectorModel::Vae(m), deep_report(log))
            }
            DetectorKind::Dsvdd | DetectorKind::Mcdsvdd => {
                let per_class = kind == DetectorKind::Mcdsvdd;
                let (m, rep) = hypersphere::train_hypersphere(
                    train,
                    labels,
                    class_names,
                    validation,
                    validation_labels,
                    &config.autoencoder(),
                    &config.svdd,
                    per_class,
                    seed,
                )?;
                let report = FitReport {
                    validation_loss: Some(rep.log.best_validation_loss),
                    collapse_trace: rep.log.monitor.clone(),
                    collapse_warning: m.collapse_warning.clone(),
                    train_log: Some(rep.log),
                    pretrain_log: rep.pretrain,
                };
                (
                    if per_class {
                        DetectorModel::Mcdsvdd(m)
                    } else {
                        DetectorModel::Dsvdd(m)
                    },
                    report,
                )
            }
        })
    }

    /// Scores normalized rows.
    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        match self {
            DetectorModel::IForest(m) => m.score(x),
            DetectorModel::Ocsvm(m) => m.score(x),
            DetectorModel::Ae(m) => m.score(x),
            DetectorModel::Vae(m) => m.score(x),
            DetectorModel::Dsvdd(m) | DetectorModel::Mcdsvdd(m) => m.score(x),
        }
    }
}

/// A detector together with the normalizer fitted on its training rows;
/// scores raw feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedDetector {
    pub normalizer: QuantileNormalizer,
    pub model: DetectorModel,
    /// Inlier subclasses seen in training, in label order.
    pub class_names: Vec<String>,
}

fn class_labels(data: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    data.samples()
        .iter()
        .map(|s| {
            names.iter().position(|n| *n == s.subclass).ok_or_else(|| {
                Error::InvalidArgument(format!("validation subclass {:?} is absent from training", s.subclass))
            })
        })
        .collect()
}

impl FittedDetector {
    /// Fits the normalizer on `train`, then the detector.
    pub fn fit(
        kind: DetectorKind,
        config: &DetectorConfig,
        train: &Dataset,
        validation: &Dataset,
        seed: u64,
    ) -> Result<(Self, FitReport)> {
        let normalizer = QuantileNormalizer::fit(train, config.n_quantiles)?;
        Self::fit_with_normalizer(normalizer, kind, config, train, validation, seed)
    }

    pub fn fit_with_normalizer(
        normalizer: QuantileNormalizer,
        kind: DetectorKind,
        config: &DetectorConfig,
        train: &Dataset,
        validation: &Dataset,
        seed: u64,
    ) -> Result<(Self, FitReport)> {
        let class_names: Vec<String> = train.subclass_counts().into_keys().collect();
        let labels = class_labels(train, &class_names)?;
        let vlabels = class_labels(validation, &class_names)?;
        let x = normalizer.transform_matrix(&train.features())?;
        let v = normalizer.transform_matrix(&validation.features())?;
        let (model, report) =
            DetectorModel::fit(kind, config, x.view(), &labels, &class_names, v.view(), &vlabels, seed)?;
        Ok((
            Self {
                normalizer,
                model,
                class_names,
            },
            report,
        ))
    }

    pub fn kind(&self) -> DetectorKind {
        self.model.kind()
    }

    pub fn dim(&self) -> usize {
        self.normalizer.dim()
    }

    /// Scores raw (unnormalized) rows.
    pub fn score_raw(&self, x: &ndarray::Array2<f64>) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        if x.ncols() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let z = self.normalizer.transform_matrix(x)?;
        self.model.score(z.view())
    }

    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.score_raw(&data.features())
    }
}
