//! The full detector × subclass × fold sweep.

use rayon::prelude::*;

use super::protocol::{fold_seed, run_scenario_detailed, CvOptions, CvPlan, DetectorSpec, ScenarioFit};
use super::report::{BenchmarkReport, FoldRecord};
use crate::data::{Dataset, QuantileNormalizer, Scenario};
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};

pub struct BenchmarkOptions {
    pub cv: CvOptions,
    /// `(top class, subclass)` columns; empty means every taxonomy subclass
    /// present in the dataset.
    pub columns: Vec<(String, String)>,
    /// Worker threads; 1 runs serially.
    pub jobs: usize,
    pub config_digest: String,
}

/// Called after every successful fit, e.g. to persist model cards.
pub type FitCallback<'a> = dyn Fn(&FoldRecord, &Scenario, &ScenarioFit) + Sync + 'a;

/// Columns of the dataset in taxonomy order.
pub fn present_columns(dataset: &Dataset) -> Vec<(String, String)> {
    let counts = dataset.subclass_counts();
    dataset
        .taxonomy()
        .top_classes()
        .flat_map(|t| {
            t.subclasses
                .iter()
                .filter(|s| counts.contains_key(s.as_str()))
                .map(|s| (t.name.clone(), s.clone()))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Runs every detector on every column and fold. Job failures are recorded
/// per fold and never abort the sweep; the result is identical for any
/// `jobs` value.
pub fn full_benchmark(
    dataset: &Dataset,
    detectors: &[DetectorSpec],
    options: &BenchmarkOptions,
    master_seed: u64,
    on_fit: Option<&FitCallback<'_>>,
) -> Result<BenchmarkReport> {
    if options.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let columns = if options.columns.is_empty() {
        present_columns(dataset)
    } else {
        options.columns.clone()
    };
    for (top, sub) in &columns {
        dataset.taxonomy().check_pair(top, sub)?;
    }
    let plan = CvPlan::new(dataset, &options.cv, master_seed)?;
    let n_quantiles = detectors.first().map(|d| d.config.n_quantiles).unwrap_or_default();

    // scenarios and normalizers are shared by every detector
    type Prepared = std::result::Result<(Scenario, Option<QuantileNormalizer>), String>;
    let prepared: Vec<Prepared> = columns
        .iter()
        .flat_map(|(top, sub)| (0..options.cv.folds).map(move |f| (top, sub, f)))
        .map(|(top, sub, f)| {
            let scenario = plan.scenario(top, sub, f)?;
            let normalizer = plan.global_normalizer(top, sub, n_quantiles)?;
            Ok((scenario, normalizer))
        })
        .map(|r: Result<_>| r.map_err(|e| e.to_string()))
        .collect();

    let jobs: Vec<(&DetectorSpec, usize)> = detectors
        .iter()
        .flat_map(|d| (0..prepared.len()).map(move |i| (d, i)))
        .collect();
    let run = |&(spec, i): &(&DetectorSpec, usize)| -> FoldRecord {
        let (top, sub) = &columns[i / options.cv.folds];
        let fold = i % options.cv.folds;
        let mut record = FoldRecord {
            detector: spec.kind,
            top_class: top.clone(),
            subclass: sub.clone(),
            fold,
            auroc: None,
            error: None,
            n_train: 0,
            n_ts2: 0,
            n_outliers: 0,
        };
        match &prepared[i] {
            Err(e) => record.error = Some(e.clone()),
            Ok((scenario, normalizer)) => {
                record.n_train = scenario.train.len();
                record.n_ts2 = scenario.ts2.len();
                record.n_outliers = scenario.n_outliers();
                let seed = fold_seed(master_seed, spec.kind.name(), top, sub, fold);
                match run_scenario_detailed(spec, scenario, normalizer.as_ref(), seed) {
                    Ok((auroc, fit)) => {
                        record.auroc = Some(auroc);
                        if let Some(cb) = on_fit {
                            cb(&record, scenario, &fit);
                        }
                    }
                    Err(e) => {
                        log::warn!("{e}");
                        record.error = Some(e.to_string());
                    }
                }
            }
        }
        record
    };

    let records: Vec<FoldRecord> = if options.jobs == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    let kinds: Vec<DetectorKind> = detectors.iter().map(|d| d.kind).collect();
    Ok(BenchmarkReport::new(
        master_seed,
        options.config_digest.clone(),
        kinds,
        columns,
        records,
    ))
}
