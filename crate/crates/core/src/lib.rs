//! Multi-class Deep SVDD and baseline anomaly detectors for tabular
//! features, with a leave-one-subclass-out evaluation harness.
//!
//! Every detector follows the same contract: fit on inlier rows, score any
//! row of the fitted dimensionality, higher score means more anomalous.

// range checks are written `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod card;
pub mod config;
pub mod data;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod nn;
pub mod util;

pub use data::{Dataset, QuantileNormalizer, Sample, Scenario, SyntheticSpec, Taxonomy};
pub use detectors::{DetectorConfig, DetectorKind, DetectorModel, FittedDetector};
pub use error::{Error, Result};
pub use eval::{auroc, EvalResult};
