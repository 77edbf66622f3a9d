//! Stratified hold-out and k-fold partitioning by subclass.
//!
//! Every selection sorts rows by id before drawing from the RNG, so results
//! depend only on the seed and the set of rows, never on file order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::util;

/// Sample indices grouped by subclass; groups in name order, members in id order.
fn groups_by_subclass(data: &Dataset) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.samples().iter().enumerate() {
        groups.entry(s.subclass.as_str()).or_default().push(i);
    }
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| data.samples()[a].id.cmp(&data.samples()[b].id));
    }
    groups
}

fn collect(data: &Dataset, mut indices: Vec<usize>) -> Dataset {
    indices.sort_by(|&a, &b| data.samples()[a].id.cmp(&data.samples()[b].id));
    let samples: Vec<Sample> = indices.into_iter().map(|i| data.samples()[i].clone()).collect();
    data.with_samples(samples)
}

/// Number of rows a subclass of size `count` sends to the test part:
/// `round(fraction * count)` clamped so that both parts are non-empty.
pub fn test_count(count: usize, fraction: f64) -> usize {
    ((fraction * count as f64).round() as usize).clamp(1, count - 1)
}

/// Splits into (train, test), stratified by subclass. Both outputs are sorted by id.
pub fn stratified_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = util::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (subclass, mut members) in groups_by_subclass(data) {
        if members.len() < 2 {
            return Err(Error::Stratification {
                subclass: subclass.to_string(),
                count: members.len(),
                needed: 2,
            });
        }
        members.shuffle(&mut rng);
        let n_test = test_count(members.len(), test_fraction);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    Ok((collect(data, train), collect(data, test)))
}

/// Stratified k-fold: returns k (train, validation) pairs whose validation
/// parts partition `data`. Within each subclass fold sizes differ by at most one.
pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut rng = util::rng(seed);
    let mut fold_of = vec![0usize; data.len()];
    // carry the round-robin offset across subclasses so remainders spread out
    let mut offset = 0;
    for (subclass, mut members) in groups_by_subclass(data) {
        if members.len() < k {
            return Err(Error::Stratification {
                subclass: subclass.to_string(),
                count: members.len(),
                needed: k,
            });
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = (pos + offset) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold_of[i] == f);
            (collect(data, train), collect(data, val))
        })
        .collect())
}
