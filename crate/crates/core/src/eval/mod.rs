//! AUROC, cross-validation orchestration, aggregation and reporting.

pub mod benchmark;
pub mod metrics;
pub mod protocol;
pub mod reference;
pub mod report;

pub use benchmark::{full_benchmark, present_columns, BenchmarkOptions};
pub use metrics::{auroc, welch_p_value};
pub use protocol::{
    compare, run_cv, run_scenario, CvOptions, CvPlan, DetectorSpec, EvalResult, NormalizerScope, ScenarioDetector,
    ScenarioFit,
};
pub use report::{best_detector, BenchmarkReport, Cell, CellOutcome, FoldRecord};
