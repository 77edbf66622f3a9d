//! Leave-one-subclass-out evaluation scenarios.
//!
//! A scenario trains on the inlier subclasses of one top class and evaluates
//! on TS2: held-out inliers mixed with the excluded subclass at a fixed
//! outlier fraction.

use rand::seq::SliceRandom;

use super::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_OUTLIER_FRACTION: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub top_class: String,
    pub outlier_subclass: String,
    /// Inlier training rows (top class minus the outlier subclass).
    pub train: Dataset,
    /// Inlier validation rows for early stopping; may be empty.
    pub validation: Dataset,
    pub ts2: Dataset,
    /// Parallel to `ts2`: true for rows of the outlier subclass.
    pub ts2_outlier: Vec<bool>,
    pub fold_index: usize,
    pub seed: u64,
    /// Set when too few outliers exist to reach the requested fraction.
    pub warning: Option<String>,
}

impl Scenario {
    pub fn n_outliers(&self) -> usize {
        self.ts2_outlier.iter().filter(|&&f| f).count()
    }

    pub fn achieved_fraction(&self) -> f64 {
        self.n_outliers() as f64 / self.ts2.len() as f64
    }

    /// Inlier subclasses in taxonomy order.
    pub fn inlier_subclasses(&self) -> Vec<String> {
        self.train
            .taxonomy()
            .subclasses(&self.top_class)
            .unwrap_or_default()
            .iter()
            .filter(|s| **s != self.outlier_subclass)
            .cloned()
            .collect()
    }
}

/// TS2 composition for `inliers` and `outliers` available rows.
///
/// Keeps every outlier whenever possible (they are the scarce side) and
/// subsamples whichever side is in excess. Returns (n_inliers, n_outliers).
pub fn ts2_sizes(inliers: usize, outliers: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "outlier fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if inliers == 0 {
        return Err(Error::Scenario("empty inlier pool".into()));
    }
    if outliers == 0 {
        return Err(Error::Scenario("no outlier samples available".into()));
    }
    let wanted = ((inliers as f64 * fraction / (1.0 - fraction)).round() as usize).max(1);
    if outliers >= wanted {
        Ok((inliers, wanted))
    } else {
        let n_in = ((outliers as f64 * (1.0 - fraction) / fraction).round() as usize).clamp(1, inliers);
        Ok((n_in, outliers))
    }
}

fn subsample(mut pool: Vec<Sample>, n: usize, rng: &mut util::Rng) -> Vec<Sample> {
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    if n < pool.len() {
        pool.shuffle(rng);
        pool.truncate(n);
    }
    pool
}

/// Builds a scenario from a train/test split. The inlier validation set is empty.
pub fn build_scenario(
    train: &Dataset,
    test: &Dataset,
    top_class: &str,
    outlier_subclass: &str,
    outlier_fraction: f64,
    seed: u64,
) -> Result<Scenario> {
    let empty = Dataset::empty(train.dim(), train.taxonomy().clone());
    build_cv_scenario(
        train,
        &empty,
        test,
        top_class,
        outlier_subclass,
        outlier_fraction,
        seed,
        0,
    )
}

/// Builds the scenario for one cross-validation fold. Outliers are drawn
/// from every part (fold train, fold validation and test); inliers of TS2
/// only from `test`.
#[allow(clippy::too_many_arguments)]
pub fn build_cv_scenario(
    fold_train: &Dataset,
    fold_validation: &Dataset,
    test: &Dataset,
    top_class: &str,
    outlier_subclass: &str,
    outlier_fraction: f64,
    seed: u64,
    fold_index: usize,
) -> Result<Scenario> {
    fold_train.taxonomy().check_pair(top_class, outlier_subclass)?;
    let is_inlier = |s: &Sample| s.top_class == top_class && s.subclass != outlier_subclass;
    let is_outlier = |s: &Sample| s.subclass == outlier_subclass;

    let train = fold_train.filter(is_inlier).sorted_by_id();
    if train.is_empty() {
        return Err(Error::Scenario(format!(
            "no inlier training rows for `{top_class}` without `{outlier_subclass}`"
        )));
    }
    let validation = fold_validation.filter(is_inlier).sorted_by_id();

    let inlier_pool: Vec<Sample> = test.samples().iter().filter(|s| is_inlier(s)).cloned().collect();
    let outlier_pool: Vec<Sample> = fold_train
        .samples()
        .iter()
        .chain(fold_validation.samples())
        .chain(test.samples())
        .filter(|s| is_outlier(s))
        .cloned()
        .collect();

    let (n_in, n_out) = ts2_sizes(inlier_pool.len(), outlier_pool.len(), outlier_fraction)
        .map_err(|e| e.context(format!("scenario {top_class}/{outlier_subclass}")))?;
    let warning = (n_out == outlier_pool.len() && n_in < inlier_pool.len()).then(|| {
        format!(
            "only {} outliers available; TS2 uses {n_in} inliers (fraction {:.4})",
            n_out,
            n_out as f64 / (n_in + n_out) as f64
        )
    });

    let mut rng = util::rng(seed);
    let mut ts2_samples = subsample(inlier_pool, n_in, &mut rng);
    ts2_samples.extend(subsample(outlier_pool, n_out, &mut rng));
    ts2_samples.sort_by(|a, b| a.id.cmp(&b.id));
    let ts2_outlier = ts2_samples.iter().map(is_outlier).collect();
    let ts2 = test.with_samples(ts2_samples);

    assert!(
        train.samples().iter().all(|s| s.subclass != outlier_subclass),
        "scenario training set contains the outlier subclass"
    );

    Ok(Scenario {
        top_class: top_class.to_string(),
        outlier_subclass: outlier_subclass.to_string(),
        train,
        validation,
        ts2,
        ts2_outlier,
        fold_index,
        seed,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::taxonomy::Taxonomy;

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(ts2_sizes(900, 300, 0.1).unwrap(), (900, 100));
        assert_eq!(ts2_sizes(90, 4, 0.1).unwrap(), (36, 4));
        assert!(ts2_sizes(0, 4, 0.1).is_err());
        assert!(ts2_sizes(10, 0, 0.1).is_err());
    }

    /// Oracle: enumerate every admissible (n_in, n_out) with n_in <= I and
    /// n_out <= O, and keep those closest to the target fraction that use
    /// the most outliers.
    fn brute_force_sizes(inl: usize, out: usize) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_key = (f64::INFINITY, 0usize, 0usize);
        for o in 1..=out {
            for i in 1..=inl {
                let err = (o as f64 - 0.1 * (i + o) as f64).abs();
                // prefer small count error, then more outliers, then more inliers
                let key = (err, usize::MAX - o, usize::MAX - i);
                if key.0 < best_key.0 - 1e-12
                    || ((key.0 - best_key.0).abs() <= 1e-12 && (key.1, key.2) < (best_key.1, best_key.2))
                {
                    best_key = key;
                    best = (i, o);
                }
            }
        }
        best
    }

    #[test]
    fn ratio_matches_enumeration_when_outliers_scarce() {
        for (inl, out) in [(90, 4), (100, 3), (50, 2), (200, 7)] {
            assert_eq!(ts2_sizes(inl, out, 0.1).unwrap(), brute_force_sizes(inl, out));
        }
    }

    fn dataset() -> (Dataset, Dataset) {
        let tax = Arc::new(Taxonomy::alerce());
        let mut train = Vec::new();
        let mut test = Vec::new();
        let push = |v: &mut Vec<Sample>, id: String, top: &str, sub: &str| {
            v.push(Sample {
                id,
                top_class: top.into(),
                subclass: sub.into(),
                features: vec![0.0, 1.0],
            })
        };
        for i in 0..40 {
            push(&mut train, format!("tr-e-{i}"), "periodic", "E");
            push(&mut train, format!("tr-c-{i}"), "periodic", "CEP");
            push(&mut train, format!("tr-s-{i}"), "transient", "SNIa");
        }
        for i in 0..30 {
            push(&mut train, format!("tr-r-{i}"), "periodic", "RRL");
        }
        for i in 0..10 {
            push(&mut test, format!("te-e-{i}"), "periodic", "E");
            push(&mut test, format!("te-c-{i}"), "periodic", "CEP");
            push(&mut test, format!("te-s-{i}"), "transient", "SNIa");
        }
        for i in 0..5 {
            push(&mut test, format!("te-r-{i}"), "periodic", "RRL");
        }
        (
            Dataset::new(train, 2, tax.clone()).unwrap(),
            Dataset::new(test, 2, tax).unwrap(),
        )
    }

    #[test]
    fn scenario_excludes_outlier_and_mixes_ts2() {
        let (train, test) = dataset();
        let sc = build_scenario(&train, &test, "periodic", "RRL", 0.1, 4).unwrap();
        assert_eq!(sc.train.len(), 80);
        assert!(sc.train.samples().iter().all(|s| s.subclass != "RRL"));
        assert!(sc.train.samples().iter().all(|s| s.top_class == "periodic"));
        // 20 test inliers -> round(20/9) = 2 outliers
        assert_eq!(sc.ts2.len(), 22);
        assert_eq!(sc.n_outliers(), 2);
        for (s, &flag) in sc.ts2.samples().iter().zip(&sc.ts2_outlier) {
            assert_eq!(flag, s.subclass == "RRL");
            if !flag {
                assert!(s.id.starts_with("te-"), "inlier {} not from test", s.id);
            }
        }
        assert_eq!(sc.inlier_subclasses(), vec!["CEP", "DSCT", "E", "LPV"]);
    }

    #[test]
    fn cross_class_pair_is_rejected() {
        let (train, test) = dataset();
        assert!(matches!(
            build_scenario(&train, &test, "transient", "RRL", 0.1, 0),
            Err(Error::Taxonomy(_))
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let (train, test) = dataset();
        let a = build_scenario(&train, &test, "periodic", "RRL", 0.1, 4).unwrap();
        let b = build_scenario(&train, &test, "periodic", "RRL", 0.1, 4).unwrap();
        assert_eq!(a.ts2.ids(), b.ts2.ids());
    }
}
