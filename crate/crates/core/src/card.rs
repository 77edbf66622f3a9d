//! Model cards: a fitted detector together with everything needed to
//! audit and replay it, stored as checksummed JSON.
//!
//! On disk a card is an envelope `{"format", "sha256", "payload"}` where
//! `sha256` covers the exact payload bytes. Loading recomputes the hash
//! before deserializing, so any edit to the payload is caught.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::data::{Dataset, Taxonomy};
use crate::detectors::{DetectorConfig, DetectorKind, FitReport, FittedDetector};
use crate::error::{Error, Result};
use crate::util;

pub const CARD_FORMAT: &str = "mcdsvdd-model-card/1";

/// What the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub top_class: String,
    pub outlier_subclass: String,
    pub rows: usize,
    pub subclass_counts: BTreeMap<String, usize>,
    /// SHA-256 over the sorted training ids.
    pub ids_digest: String,
}

impl TrainingManifest {
    pub fn from_dataset(train: &Dataset, top_class: &str, outlier_subclass: &str) -> Self {
        let mut ids = train.ids();
        ids.sort_unstable();
        Self {
            top_class: top_class.to_string(),
            outlier_subclass: outlier_subclass.to_string(),
            rows: train.len(),
            subclass_counts: train.subclass_counts(),
            ids_digest: util::sha256_hex(ids.join("\n").as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub detector: DetectorKind,
    pub seed: u64,
    pub config_digest: String,
    pub config: DetectorConfig,
    pub taxonomy: Taxonomy,
    pub manifest: TrainingManifest,
    pub normalizer_digest: String,
    pub validation_loss: Option<f64>,
    /// Embedding covariance trace per epoch; empty for non-hypersphere models.
    pub collapse_trace: Vec<f64>,
    pub collapse_warning: Option<String>,
    pub model: FittedDetector,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    sha256: String,
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    format: String,
    sha256: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

impl ModelCard {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: FittedDetector,
        report: &FitReport,
        config: &DetectorConfig,
        config_digest: &str,
        seed: u64,
        taxonomy: &Taxonomy,
        manifest: TrainingManifest,
    ) -> Self {
        Self {
            detector: model.kind(),
            seed,
            config_digest: config_digest.to_string(),
            config: config.clone(),
            taxonomy: taxonomy.clone(),
            manifest,
            normalizer_digest: model.normalizer.digest(),
            validation_loss: report.validation_loss,
            collapse_trace: report.collapse_trace.clone(),
            collapse_warning: report.collapse_warning.clone(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let payload = serde_json::to_string(self).map_err(|e| Error::Card(e.to_string()))?;
        let raw = RawValue::from_string(payload).map_err(|e| Error::Card(e.to_string()))?;
        let envelope = EnvelopeOut {
            format: CARD_FORMAT,
            sha256: util::sha256_hex(raw.get().as_bytes()),
            payload: &raw,
        };
        serde_json::to_string(&envelope).map_err(|e| Error::Card(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let envelope: EnvelopeIn<'_> =
            serde_json::from_str(text).map_err(|e| Error::Card(format!("malformed envelope: {e}")))?;
        if envelope.format != CARD_FORMAT {
            return Err(Error::Card(format!(
                "unsupported card format {:?}, expected {CARD_FORMAT:?}",
                envelope.format
            )));
        }
        let actual = util::sha256_hex(envelope.payload.get().as_bytes());
        if actual != envelope.sha256 {
            return Err(Error::Checksum {
                declared: envelope.sha256,
                actual,
            });
        }
        serde_json::from_str(envelope.payload.get()).map_err(|e| Error::Card(format!("malformed payload: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.context(format!("loading {}", path.display())))
    }
}
