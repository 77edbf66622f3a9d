//! Ingestion, normalization, splitting and scenario assembly.

pub mod dataset;
pub mod normalize;
pub mod scenario;
pub mod split;
pub mod synth;
pub mod taxonomy;

pub use dataset::{
    impute_with_medians, parse_dataset, read_dataset, write_dataset, write_dataset_file, Dataset, IngestReport,
    ParseOptions, Sample,
};
pub use normalize::{QuantileNormalizer, DEFAULT_N_QUANTILES};
pub use scenario::{build_cv_scenario, build_scenario, ts2_sizes, Scenario, DEFAULT_OUTLIER_FRACTION};
pub use split::{stratified_kfold, stratified_split};
pub use synth::{generate_synthetic, ClusterSpec, SyntheticSpec};
pub use taxonomy::Taxonomy;
