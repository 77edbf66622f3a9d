use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::util;

/// Area under the ROC curve via the Mann-Whitney rank statistic: the
/// probability that a random outlier (`true`) outscores a random inlier,
/// with ties counted as one half.
pub fn auroc(scores: &[f64], outlier: &[bool]) -> Result<f64> {
    if scores.len() != outlier.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: outlier.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("scores contain NaN".into()));
    }
    let n_pos = outlier.iter().filter(|&&o| o).count();
    let n_neg = outlier.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both labels ({n_pos} outliers, {n_neg} inliers)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 1-based average ranks of the outliers
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| outlier[k]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Two-sided Welch t-test p-value for a difference in means.
///
/// When both samples have zero variance the test statistic is undefined;
/// by convention equal means give `p = 1` and different means `p = 0`.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Welch test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (util::mean(a), util::mean(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = util::sample_std(a).powi(2) / na;
    let vb = util::sample_std(b).powi(2) / nb;
    if va + vb == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}
