//! Per-feature empirical-quantile normalization into [-1, 1].

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_N_QUANTILES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalizer {
    n_quantiles: usize,
    features: Vec<FeatureGrid>,
    constant_features: Vec<usize>,
}

/// Fitted grid for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureGrid {
    /// Training quantiles at probabilities k / (n_quantiles - 1).
    references: Vec<f64>,
    /// Distinct reference values, ascending.
    knots: Vec<f64>,
    /// CDF position of each knot; tied references share their mean position.
    positions: Vec<f64>,
    /// Training median, used for cells that arrive missing.
    median: f64,
}

impl FeatureGrid {
    fn fit(column: &mut [f64], n_quantiles: usize) -> Self {
        column.sort_by(f64::total_cmp);
        let references: Vec<f64> = (0..n_quantiles)
            .map(|k| util::quantile_sorted(column, k as f64 / (n_quantiles - 1) as f64))
            .collect();
        let mut knots: Vec<f64> = Vec::new();
        let mut positions: Vec<f64> = Vec::new();
        let mut k = 0;
        while k < references.len() {
            let mut end = k + 1;
            while end < references.len() && references[end] == references[k] {
                end += 1;
            }
            let mean_pos = (k..end).map(|i| i as f64).sum::<f64>() / (end - k) as f64 / (n_quantiles - 1) as f64;
            knots.push(references[k]);
            positions.push(mean_pos);
            k = end;
        }
        Self {
            references,
            knots,
            positions,
            median: util::quantile_sorted(column, 0.5),
        }
    }

    /// Empirical CDF in [0, 1].
    fn cdf(&self, x: f64) -> f64 {
        let x = if x.is_finite() { x } else { self.median };
        if self.knots.len() == 1 {
            return 0.5;
        }
        let last = self.knots.len() - 1;
        if x <= self.knots[0] {
            return 0.0;
        }
        if x >= self.knots[last] {
            return 1.0;
        }
        // first knot strictly greater than x; 1 <= hi <= last
        let hi = self.knots.partition_point(|&k| k <= x);
        let lo = hi - 1;
        if self.knots[lo] == x {
            return self.positions[lo];
        }
        let t = (x - self.knots[lo]) / (self.knots[hi] - self.knots[lo]);
        self.positions[lo] + t * (self.positions[hi] - self.positions[lo])
    }
}

impl QuantileNormalizer {
    /// Fits one quantile grid per feature on `train`. `n_quantiles` is capped
    /// at the number of training rows.
    pub fn fit(train: &Dataset, n_quantiles: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("cannot fit normalizer on empty data".into()));
        }
        if n_quantiles < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_quantiles must be at least 2, got {n_quantiles}"
            )));
        }
        let n_quantiles = n_quantiles.min(train.len()).max(2);
        let mut features = Vec::with_capacity(train.dim());
        let mut constant_features = Vec::new();
        for j in 0..train.dim() {
            let mut column: Vec<f64> = train
                .samples()
                .iter()
                .map(|s| s.features[j])
                .filter(|v| v.is_finite())
                .collect();
            if column.is_empty() {
                return Err(Error::Ingestion(format!(
                    "feature column {j} has no finite training values"
                )));
            }
            if column.len() == 1 {
                column.push(column[0]);
            }
            let grid = FeatureGrid::fit(&mut column, n_quantiles);
            if grid.knots.len() == 1 {
                log::warn!("feature {j} is constant in training data; mapped to 0");
                constant_features.push(j);
            }
            features.push(grid);
        }
        Ok(Self {
            n_quantiles,
            features,
            constant_features,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn n_quantiles(&self) -> usize {
        self.n_quantiles
    }

    /// Features that were constant at fit time (always transformed to 0).
    pub fn constant_features(&self) -> &[usize] {
        &self.constant_features
    }

    pub fn reference_grid(&self, feature: usize) -> &[f64] {
        &self.features[feature].references
    }

    pub fn transform_value(&self, feature: usize, x: f64) -> f64 {
        2.0 * self.features[feature].cdf(x) - 1.0
    }

    pub fn transform_row(&self, row: ArrayView1<f64>) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &x)| self.transform_value(j, x))
            .collect())
    }

    pub fn transform_matrix(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: data.ncols(),
            });
        }
        let mut out = data.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.transform_value(j, *v);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: data.dim(),
            });
        }
        let samples = data
            .samples()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                for (j, v) in s.features.iter_mut().enumerate() {
                    *v = self.transform_value(j, *v);
                }
                s
            })
            .collect();
        Ok(data.with_samples(samples))
    }

    /// Stable digest of the fitted state, recorded next to scores.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("normalizer serializes");
        util::sha256_hex(&bytes)[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use rand::Rng as _;

    use super::*;
    use crate::data::dataset::Sample;
    use crate::data::taxonomy::Taxonomy;

    fn one_column(values: &[f64]) -> Dataset {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample {
                id: format!("s{i:05}"),
                top_class: "periodic".into(),
                subclass: "E".into(),
                features: vec![v],
            })
            .collect();
        Dataset::new(samples, 1, Arc::new(Taxonomy::alerce())).unwrap()
    }

    #[test]
    fn evenly_ranked_grid() {
        let n = QuantileNormalizer::fit(&one_column(&[3.0, 1.0, 5.0, 2.0, 4.0]), 5).unwrap();
        assert_eq!(n.reference_grid(0), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(n.transform_value(0, 1.0), -1.0);
        assert_eq!(n.transform_value(0, 5.0), 1.0);
        assert_eq!(n.transform_value(0, 3.0), 0.0);
        assert_eq!(n.transform_value(0, 50.0), 1.0);
        assert_eq!(n.transform_value(0, -50.0), -1.0);
        // halfway between knots 1 and 2: cdf 0.125
        assert!((n.transform_value(0, 1.5) - (-0.75)).abs() < 1e-15);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let n = QuantileNormalizer::fit(&one_column(&[7.0, 7.0, 7.0]), 3).unwrap();
        assert_eq!(n.constant_features(), &[0]);
        for x in [7.0, -1.0, 100.0] {
            assert_eq!(n.transform_value(0, x), 0.0);
        }
    }

    #[test]
    fn n_quantiles_capped_at_train_size() {
        let n = QuantileNormalizer::fit(&one_column(&[1.0, 2.0, 3.0]), 1000).unwrap();
        assert_eq!(n.n_quantiles(), 3);
        assert!(QuantileNormalizer::fit(&one_column(&[1.0, 2.0]), 1).is_err());
    }

    #[test]
    fn ties_share_averaged_position() {
        // references [0, 1, 1, 1, 2]: knot 1 sits at mean of positions 1..=3 / 4 = 0.5
        let n = QuantileNormalizer::fit(&one_column(&[0.0, 1.0, 1.0, 1.0, 2.0]), 5).unwrap();
        assert_eq!(n.transform_value(0, 1.0), 0.0);
        assert!(n.transform_value(0, 0.5) < 0.0);
        assert!(n.transform_value(0, 1.5) > 0.0);
    }

    #[test]
    fn missing_value_takes_training_median() {
        let n = QuantileNormalizer::fit(&one_column(&[1.0, 2.0, 3.0, 4.0, 5.0]), 5).unwrap();
        assert_eq!(n.transform_value(0, f64::NAN), n.transform_value(0, 3.0));
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let n = QuantileNormalizer::fit(&one_column(&[1.0, 2.0]), 2).unwrap();
        let m = Array2::zeros((2, 3));
        assert!(matches!(n.transform_matrix(&m), Err(Error::Shape { .. })));
    }

    /// Kolmogorov distance between the empirical CDF of `u` and U(-1, 1).
    fn ks_uniform(u: &mut [f64]) -> f64 {
        u.sort_by(f64::total_cmp);
        let n = u.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in u.iter().enumerate() {
            let f = (x + 1.0) / 2.0;
            d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        }
        d
    }

    #[test]
    fn heavy_tailed_column_becomes_uniform() {
        let mut rng = util::rng(11);
        let cauchy = |rng: &mut util::Rng| (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan();
        let train: Vec<f64> = (0..4000).map(|_| cauchy(&mut rng)).collect();
        let norm = QuantileNormalizer::fit(&one_column(&train), DEFAULT_N_QUANTILES).unwrap();

        let mut on_train: Vec<f64> = train.iter().map(|&x| norm.transform_value(0, x)).collect();
        assert!(ks_uniform(&mut on_train) < 0.05);

        let mut fresh: Vec<f64> = (0..4000).map(|_| norm.transform_value(0, cauchy(&mut rng))).collect();
        assert!(ks_uniform(&mut fresh) < 0.05);
    }

    proptest! {
        #[test]
        fn rank_preserving_and_bounded(
            train in prop::collection::vec(-1e6f64..1e6, 2..200),
            probes in prop::collection::vec(-1e7f64..1e7, 1..50),
            nq in 2usize..300,
        ) {
            let norm = QuantileNormalizer::fit(&one_column(&train), nq).unwrap();
            let grid = norm.reference_grid(0);
            prop_assert!(grid.windows(2).all(|w| w[0] <= w[1]));
            let mut all: Vec<f64> = train.iter().chain(probes.iter()).copied().collect();
            all.sort_by(f64::total_cmp);
            let mapped: Vec<f64> = all.iter().map(|&x| norm.transform_value(0, x)).collect();
            for w in mapped.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for v in mapped {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
