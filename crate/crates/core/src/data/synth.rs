//! Gaussian-mixture datasets for desk-scale experiments.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use super::taxonomy::Taxonomy;
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub clusters: Vec<ClusterSpec>,
}

/// One Gaussian component. At most one of `std`, `variances` and
/// `covariance` may be given; none means identity covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub top_class: String,
    pub subclass: String,
    pub count: usize,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl ClusterSpec {
    pub fn isotropic(top: &str, sub: &str, count: usize, mean: Vec<f64>, std: f64) -> Self {
        Self {
            top_class: top.into(),
            subclass: sub.into(),
            count,
            mean,
            std: Some(std),
            variances: None,
            covariance: None,
        }
    }
}

fn spec_err(field: String, message: impl Into<String>) -> Error {
    Error::SyntheticSpec {
        field,
        message: message.into(),
    }
}

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| spec_err("<root>".into(), e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn dim(&self) -> usize {
        self.clusters.first().map(|c| c.mean.len()).unwrap_or(0)
    }

    /// Taxonomy implied by the clusters, in first-appearance order.
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let mut classes: Vec<(String, Vec<String>)> = Vec::new();
        for (i, c) in self.clusters.iter().enumerate() {
            if let Some((top, _)) = classes.iter().find(|(_, subs)| subs.contains(&c.subclass)) {
                if *top != c.top_class {
                    return Err(spec_err(
                        format!("clusters[{i}].top_class"),
                        format!("subclass `{}` already belongs to `{top}`", c.subclass),
                    ));
                }
                continue;
            }
            match classes.iter_mut().find(|(top, _)| *top == c.top_class) {
                Some((_, subs)) => subs.push(c.subclass.clone()),
                None => classes.push((c.top_class.clone(), vec![c.subclass.clone()])),
            }
        }
        Taxonomy::new(classes)
    }

    /// Lower Cholesky factor of each cluster's covariance, validating the mixture definition.
    fn factors(&self) -> Result<Vec<DMatrix<f64>>> {
        if self.clusters.len() < 2 {
            return Err(spec_err("clusters".into(), "at least two clusters are required"));
        }
        let d = self.dim();
        if d == 0 {
            return Err(spec_err("clusters[0].mean".into(), "mean must be non-empty"));
        }
        let mut out = Vec::with_capacity(self.clusters.len());
        for (i, c) in self.clusters.iter().enumerate() {
            let field = |name: &str| format!("clusters[{i}].{name}");
            if c.count == 0 {
                return Err(spec_err(field("count"), "count must be positive"));
            }
            if c.mean.len() != d {
                return Err(spec_err(
                    field("mean"),
                    format!("length {} differs from dimension {d}", c.mean.len()),
                ));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(spec_err(field("mean"), "entries must be finite"));
            }
            let given = [c.std.is_some(), c.variances.is_some(), c.covariance.is_some()];
            if given.iter().filter(|&&g| g).count() > 1 {
                return Err(spec_err(
                    field("covariance"),
                    "give at most one of std, variances, covariance",
                ));
            }
            let cov = if let Some(s) = c.std {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(spec_err(field("std"), "std must be positive"));
                }
                DMatrix::from_diagonal_element(d, d, s * s)
            } else if let Some(v) = &c.variances {
                if v.len() != d {
                    return Err(spec_err(field("variances"), format!("expected {d} entries")));
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(v))
            } else if let Some(rows) = &c.covariance {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(spec_err(field("covariance"), format!("expected a {d}x{d} matrix")));
                }
                let m = DMatrix::from_fn(d, d, |r, col| rows[r][col]);
                if (&m - m.transpose()).abs().max() > 1e-12 * (1.0 + m.abs().max()) {
                    return Err(spec_err(field("covariance"), "matrix is not symmetric"));
                }
                m
            } else {
                DMatrix::identity(d, d)
            };
            let chol = cov
                .cholesky()
                .ok_or_else(|| spec_err(field("covariance"), "covariance is not positive definite"))?;
            out.push(chol.l());
        }
        Ok(out)
    }

    /// Draws the dataset. Rows appear cluster by cluster; ids are
    /// `c{cluster}-{row}` and therefore unique.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let factors = self.factors()?;
        let taxonomy = Arc::new(self.taxonomy()?);
        let d = self.dim();
        let mut rng = util::rng(seed);
        let mut samples = Vec::new();
        for (ci, (c, l)) in self.clusters.iter().zip(&factors).enumerate() {
            for i in 0..c.count {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let x = l * z;
                samples.push(Sample {
                    id: format!("c{ci:02}-{i:05}"),
                    top_class: c.top_class.clone(),
                    subclass: c.subclass.clone(),
                    features: x.iter().zip(&c.mean).map(|(a, m)| a + m).collect(),
                });
            }
        }
        Dataset::new(samples, d, taxonomy)
    }

    /// Three unit-variance clusters of 200 points, pairwise 10 apart, in 4 dims.
    pub fn three_clusters() -> Self {
        let h = 10.0 * 3f64.sqrt() / 2.0;
        Self {
            clusters: vec![
                ClusterSpec::isotropic("synthetic", "A", 200, vec![0.0, 0.0, 0.0, 0.0], 1.0),
                ClusterSpec::isotropic("synthetic", "B", 200, vec![10.0, 0.0, 0.0, 0.0], 1.0),
                ClusterSpec::isotropic("synthetic", "C", 200, vec![5.0, h, 0.0, 0.0], 1.0),
            ],
        }
    }

    /// Three well-separated inlier clusters plus an outlier cluster planted
    /// at the midpoint of the first two. The midpoint sits near the global
    /// inlier mean, so a single hypersphere has to enclose it.
    pub fn planted_gap(per_cluster: usize, outliers: usize) -> Self {
        // every pair of inlier means differs in 4 of 8 coordinates (distance 40)
        let a = [10.0, 10.0, 10.0, 10.0, -10.0, -10.0, -10.0, -10.0];
        let b = [-10.0, -10.0, 10.0, 10.0, 10.0, 10.0, -10.0, -10.0];
        let c = [10.0, -10.0, -10.0, 10.0, 10.0, -10.0, 10.0, -10.0];
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        Self {
            clusters: vec![
                ClusterSpec::isotropic("synthetic", "A", per_cluster, a.to_vec(), 1.0),
                ClusterSpec::isotropic("synthetic", "B", per_cluster, b.to_vec(), 1.0),
                ClusterSpec::isotropic("synthetic", "C", per_cluster, c.to_vec(), 1.0),
                ClusterSpec::isotropic("synthetic", "O", outliers, mid, 1.0),
            ],
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.generate(seed)
}
