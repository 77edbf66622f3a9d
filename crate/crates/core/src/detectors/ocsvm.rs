//! One-class SVM with an RBF kernel, solved in the dual by SMO.
//!
//! The dual is scaled so that `sum(alpha) = 1` and `0 <= alpha_i <= 1/(nu N)`.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RBF width: a fixed value or the data-driven default
/// `1 / (d * mean per-feature variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum Gamma {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = String;

    fn try_from(r: GammaRepr) -> std::result::Result<Self, String> {
        match r {
            GammaRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(Gamma::Fixed(v)),
            GammaRepr::Value(v) => Err(format!("gamma must be positive, got {v}")),
            GammaRepr::Name(s) if s == "auto" => Ok(Gamma::Auto),
            GammaRepr::Name(s) => Err(format!("unknown gamma {s:?}; use a number or \"auto\"")),
        }
    }
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Auto => GammaRepr::Name("auto".into()),
            Gamma::Fixed(v) => GammaRepr::Value(v),
        }
    }
}

impl Gamma {
    pub fn resolve(self, train: ArrayView2<f64>) -> f64 {
        match self {
            Gamma::Fixed(v) => v,
            Gamma::Auto => {
                let var = train.var_axis(Axis(0), 0.0).mean().unwrap_or(0.0);
                let d = train.ncols() as f64;
                if var > 0.0 {
                    1.0 / (d * var)
                } else {
                    1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcsvmConfig {
    pub nu: f64,
    pub gamma: Gamma,
    /// KKT violation tolerance on the scaled dual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Kernel row cache budget in megabytes.
    pub cache_mb: usize,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        Self {
            nu: 0.01,
            gamma: Gamma::Auto,
            tolerance: 1e-4,
            max_iterations: 1_000_000,
            cache_mb: 256,
        }
    }
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Kernel rows computed on demand and kept up to a fixed budget,
/// evicting the oldest first.
struct KernelCache<'a> {
    data: ArrayView2<'a, f64>,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(data: ArrayView2<'a, f64>, gamma: f64, budget_mb: usize) -> Self {
        let n = data.nrows();
        let per_row = n.max(1) * std::mem::size_of::<f64>();
        let capacity = ((budget_mb << 20) / per_row).max(2);
        Self {
            data,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            let xi = self.data.row(i);
            let r = self.data.outer_iter().map(|xj| rbf(xi, xj, self.gamma)).collect();
            self.rows[i] = Some(r);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().expect("just filled")
    }
}

/// Solution of the scaled one-class dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// `G = K alpha` at the solution.
    pub gradient: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub gap: f64,
}

/// SMO with second-order working-set selection.
pub fn solve_dual(data: ArrayView2<f64>, nu: f64, gamma: f64, config: &OcsvmConfig) -> Result<DualSolution> {
    let n = data.nrows();
    let c = 1.0 / (nu * n as f64);
    let mut cache = KernelCache::new(data, gamma, config.cache_mb);

    // feasible start: the first floor(nu N) multipliers at the bound
    let mut alpha = vec![0.0; n];
    let full = ((nu * n as f64).floor() as usize).min(n);
    for a in alpha.iter_mut().take(full) {
        *a = c;
    }
    if full < n {
        alpha[full] = (1.0 - full as f64 * c).max(0.0);
    }
    let mut grad = vec![0.0; n];
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            for (g, k) in grad.iter_mut().zip(cache.row(i)) {
                *g += a * k;
            }
        }
    }

    let at_upper = |a: f64| a >= c - 1e-15 * c;
    let mut iterations = 0;
    let gap = loop {
        // i: most violating among those that can still grow
        let mut g_min = f64::INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if !at_upper(alpha[t]) && grad[t] < g_min {
                g_min = grad[t];
                i_sel = t;
            }
        }
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        let gap = g_max - g_min;
        if i_sel == usize::MAX || gap < config.tolerance {
            break gap.max(0.0);
        }
        if iterations >= config.max_iterations {
            return Err(Error::SolverNonConvergence { iterations, gap });
        }
        let i = i_sel;
        let qi: Vec<f64> = cache.row(i).to_vec();
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 {
                let diff = grad[t] - g_min;
                if diff > 0.0 {
                    let quad = (qi[i] + 1.0 - 2.0 * qi[t]).max(1e-12);
                    let obj = -diff * diff / quad;
                    if obj < best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if j_sel == usize::MAX {
            break gap;
        }
        let j = j_sel;
        let qj: Vec<f64> = cache.row(j).to_vec();
        let quad = (qi[i] + qj[j] - 2.0 * qi[j]).max(1e-12);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let sum = old_i + old_j;
        let delta = (grad[i] - grad[j]) / quad;
        let mut ai = old_i - delta;
        let mut aj = old_j + delta;
        if ai > c {
            ai = c;
            aj = sum - c;
        }
        if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        let (di, dj) = (ai - old_i, aj - old_j);
        alpha[i] = ai;
        alpha[j] = aj;
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
        iterations += 1;
    };

    // rho: mean gradient over free multipliers, else midpoint of the bounds
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        if at_upper(alpha[t]) {
            lb = lb.max(grad[t]);
        } else if alpha[t] <= 0.0 {
            ub = ub.min(grad[t]);
        } else {
            free_sum += grad[t];
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if lb.is_finite() {
        lb
    } else {
        ub
    };
    Ok(DualSolution {
        alpha,
        gradient: grad,
        rho,
        iterations,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub support_vectors: Array2<f64>,
    pub coefficients: Array1<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl OcsvmModel {
    pub fn fit(train: ArrayView2<f64>, config: &OcsvmConfig) -> Result<Self> {
        let n = train.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "one-class SVM needs at least 2 rows, got {n}"
            )));
        }
        if !(config.nu > 0.0 && config.nu <= 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1], got {}", config.nu)));
        }
        let gamma = config.gamma.resolve(train);
        let sol = solve_dual(train, config.nu, gamma, config)?;
        let sv: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
        Ok(Self {
            support_vectors: train.select(Axis(0), &sv),
            coefficients: sv.iter().map(|&i| sol.alpha[i]).collect(),
            rho: sol.rho,
            gamma,
            nu: config.nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `rho - sum_i alpha_i K(sv_i, x)`; positive outside the learned region.
    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok(x.outer_iter()
            .map(|row| {
                let f: f64 = self
                    .support_vectors
                    .outer_iter()
                    .zip(&self.coefficients)
                    .map(|(sv, a)| a * rbf(sv, row, self.gamma))
                    .sum();
                self.rho - f
            })
            .collect())
    }
}
