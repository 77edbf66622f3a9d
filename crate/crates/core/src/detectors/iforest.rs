//! Isolation Forest.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

const EULER_GAMMA: f64 = 0.5772156649;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IForestConfig {
    pub n_trees: usize,
    pub sample_size: usize,
    /// Expected outlier share; only sets the reported decision threshold.
    pub contamination: f64,
}

impl Default for IForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            sample_size: 256,
            contamination: 0.1,
        }
    }
}

/// Average path length of an unsuccessful BST search among `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        // exact harmonic number H(1) = 1
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

/// `2^(-E[h] / c(psi))`.
pub fn score_from_path_length(mean_path: f64, sample_size: usize) -> f64 {
    let c = average_path_length(sample_size);
    if c == 0.0 {
        return 0.5;
    }
    2f64.powf(-mean_path / c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    fn build(data: ArrayView2<f64>, rows: Vec<usize>, max_depth: usize, rng: &mut util::Rng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        tree.grow(data, rows, 0, max_depth, rng);
        tree
    }

    fn grow(
        &mut self,
        data: ArrayView2<f64>,
        rows: Vec<usize>,
        depth: usize,
        max_depth: usize,
        rng: &mut util::Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= max_depth || rows.len() <= 1 {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = (0..data.ncols())
            .filter_map(|j| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(data[[i, j]]), hi.max(data[[i, j]]))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let threshold = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| data[[i, feature]] <= threshold);
        let left = self.grow(data, l, depth + 1, max_depth, rng);
        let right = self.grow(data, r, depth + 1, max_depth, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Edges to the terminal node plus `c(size)` for its remaining points.
    pub fn path_length(&self, x: ArrayView1<f64>) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] <= threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IForestModel {
    pub trees: Vec<IsolationTree>,
    pub sample_size: usize,
    pub dim: usize,
    pub contamination: f64,
    /// Training-score quantile at `1 - contamination`.
    pub threshold: f64,
}

impl IForestModel {
    pub fn fit(train: ArrayView2<f64>, config: &IForestConfig, seed: u64) -> Result<Self> {
        let n = train.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "isolation forest needs at least 2 rows, got {n}"
            )));
        }
        if config.n_trees == 0 || config.sample_size < 2 {
            return Err(Error::Config(
                "n_trees must be positive and sample_size at least 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.contamination) {
            return Err(Error::Config("contamination must lie in [0, 1)".into()));
        }
        let psi = config.sample_size;
        let max_depth = (psi as f64).log2().ceil() as usize;
        let trees = (0..config.n_trees)
            .map(|t| {
                let mut rng = util::rng(util::derive_seed(seed, &["tree", &t.to_string()]));
                let rows: Vec<usize> = if n < psi {
                    (0..psi).map(|_| rng.random_range(0..n)).collect()
                } else {
                    sample(&mut rng, n, psi).into_vec()
                };
                IsolationTree::build(train, rows, max_depth, &mut rng)
            })
            .collect();
        let mut model = Self {
            trees,
            sample_size: psi,
            dim: train.ncols(),
            contamination: config.contamination,
            threshold: 0.0,
        };
        let scores = model.score(train)?;
        model.threshold = util::quantile(&scores, 1.0 - config.contamination);
        Ok(model)
    }

    pub fn mean_path_length(&self, x: ArrayView1<f64>) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: x.ncols(),
            });
        }
        Ok(x.outer_iter()
            .map(|row| score_from_path_length(self.mean_path_length(row), self.sample_size))
            .collect())
    }

    pub fn is_outlier(&self, score: f64) -> bool {
        score > self.threshold
    }
}
