//! Shared fixtures for the criterion benches.

use mcdsvdd::data::stratified_split;
use mcdsvdd::util;
use mcdsvdd::{Dataset, DetectorConfig, SyntheticSpec};
use rand::Rng as _;

/// Three-cluster mixture split 80/20, with subclass `C` removed from the
/// training part.
pub fn scenario(seed: u64) -> (Dataset, Dataset) {
    let data = SyntheticSpec::three_clusters().generate(seed).expect("built-in spec");
    let (train, test) = stratified_split(&data, 0.2, seed).expect("split");
    (train.filter(|s| s.subclass != "C"), test)
}

/// Default hyperparameters with a small network and a short schedule, so a
/// deep fit takes milliseconds.
pub fn small_config() -> DetectorConfig {
    let mut config = DetectorConfig::default();
    config.architecture.hidden = vec![32, 16];
    config.architecture.latent = 8;
    config.training.max_epochs = 10;
    config.training.learning_rate = 1e-3;
    config
}

/// Scores on a coarse grid (so ties occur) with roughly 10% positives.
pub fn scored_set(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = util::rng(seed);
    let scores = (0..n).map(|_| rng.random_range(0..1000) as f64 / 1000.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}
