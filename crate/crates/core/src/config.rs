//! Run configuration for the benchmark binary, read from TOML.
//!
//! Precedence is command line, then the `MCDSVDD_OUTPUT_DIR` environment
//! variable (output directory only), then the file, then built-in
//! defaults. The seed has no default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{parse_dataset, Dataset, IngestReport, ParseOptions, SyntheticSpec, Taxonomy};
use crate::detectors::{DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::eval::CvOptions;
use crate::util;

pub const OUTPUT_DIR_ENV: &str = "MCDSVDD_OUTPUT_DIR";

/// Where the rows come from: exactly one of `path` and `synthetic`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    /// Delimiter-separated feature table with `id,top_class,subclass` columns.
    pub path: Option<PathBuf>,
    /// Synthetic mixture spec (TOML), generated with the run seed.
    pub synthetic: Option<PathBuf>,
    /// Taxonomy for `path`; defaults to the light-curve taxonomy.
    pub taxonomy: Option<Vec<TaxonomyEntry>>,
    pub delimiter: Option<char>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyEntry {
    pub name: String,
    pub subclasses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Worker threads for the benchmark; results do not depend on it.
    pub jobs: usize,
    pub detectors: Vec<DetectorKind>,
    /// Held-out subclasses to evaluate; empty means all present.
    pub subclasses: Vec<String>,
    pub data: DataSource,
    pub cv: CvOptions,
    pub detector: DetectorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("results"),
            jobs: 1,
            detectors: DetectorKind::ALL.to_vec(),
            subclasses: Vec::new(),
            data: DataSource::default(),
            cv: CvOptions::default(),
            detector: DetectorConfig::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub detectors: Option<Vec<DetectorKind>>,
}

/// The part of the config that determines results (not the seed, output
/// location or worker count).
#[derive(Serialize)]
struct DigestView<'a> {
    detectors: &'a [DetectorKind],
    subclasses: &'a [String],
    data: &'a DataSource,
    cv: &'a CvOptions,
    detector: &'a DetectorConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| e.context(format!("in {}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.path, &mut cfg.data.synthetic].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies overrides in precedence order; `env_output_dir` is the value
    /// of [`OUTPUT_DIR_ENV`], passed in so callers control the environment.
    pub fn apply(&mut self, overrides: &Overrides, env_output_dir: Option<PathBuf>) {
        if let Some(s) = overrides.seed {
            self.seed = Some(s);
        }
        if let Some(dir) = overrides.output_dir.clone().or(env_output_dir) {
            self.output_dir = dir;
        }
        if let Some(j) = overrides.jobs {
            self.jobs = j;
        }
        if let Some(d) = &overrides.detectors {
            self.detectors = d.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("a seed is required (set `seed` or pass --seed)".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detectors selected".into()));
        }
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("set only one of data.path and data.synthetic".into())),
            (None, None) => return Err(Error::Config("set data.path or data.synthetic".into())),
            _ => {}
        }
        for p in [&self.data.path, &self.data.synthetic].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("data file not found: {}", p.display())));
            }
        }
        self.cv.validate()?;
        self.detector.validate()
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (set `seed` or pass --seed)".into()))
    }

    /// SHA-256 prefix over the result-determining fields.
    pub fn digest(&self) -> String {
        let view = DigestView {
            detectors: &self.detectors,
            subclasses: &self.subclasses,
            data: &self.data,
            cv: &self.cv,
            detector: &self.detector,
        };
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        util::sha256_hex(&bytes)[..16].to_string()
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        if let Some(spec) = &self.data.synthetic {
            return SyntheticSpec::load(spec)?.taxonomy();
        }
        match &self.data.taxonomy {
            None => Ok(Taxonomy::alerce()),
            Some(entries) => Taxonomy::new(entries.iter().map(|e| (e.name.clone(), e.subclasses.clone())).collect()),
        }
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            delimiter: self.data.delimiter.map(|c| c as u8).unwrap_or(b','),
            ..Default::default()
        }
    }

    /// Loads or generates the dataset.
    pub fn load_dataset(&self) -> Result<(Dataset, IngestReport)> {
        let seed = self.seed()?;
        if let Some(spec) = &self.data.synthetic {
            let spec = SyntheticSpec::load(spec)?;
            let ds = spec.generate(util::derive_seed(seed, &["synthetic"]))?;
            let report = IngestReport {
                rows: ds.len(),
                missing_per_column: vec![0; ds.dim()],
                imputed: 0,
            };
            return Ok((ds, report));
        }
        let path = self
            .data
            .path
            .as_ref()
            .ok_or_else(|| Error::Config("set data.path or data.synthetic".into()))?;
        parse_dataset(path, Arc::new(self.taxonomy()?), &self.parse_options())
    }

    /// `(top class, subclass)` columns for the configured subclasses.
    pub fn columns(&self, taxonomy: &Taxonomy) -> Result<Vec<(String, String)>> {
        self.subclasses
            .iter()
            .map(|s| {
                taxonomy
                    .parent_of(s)
                    .map(|t| (t.to_string(), s.clone()))
                    .ok_or_else(|| Error::Taxonomy(format!("unknown subclass `{s}`")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 7
jobs = 2
detectors = ["iforest", "mcdsvdd"]

[data]
synthetic = "spec.toml"

[cv]
folds = 3

[detector.architecture]
hidden = [16]
latent = 4

[detector.training]
max_epochs = 20
"#;

    #[test]
    fn parses_partial_files_over_defaults() {
        let c = RunConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.cv.folds, 3);
        assert_eq!(c.cv.test_fraction, 0.2);
        assert_eq!(c.detector.architecture.hidden, vec![16]);
        assert_eq!(c.detector.training.max_epochs, 20);
        assert_eq!(c.detector.training.batch_size, 128);
        assert_eq!(c.detectors, vec![DetectorKind::IForest, DetectorKind::Mcdsvdd]);
        assert!(RunConfig::from_toml_str("sede = 1").is_err());
    }

    #[test]
    fn precedence() {
        let mut c = RunConfig::from_toml_str("seed = 1\noutput_dir = \"from-file\"").unwrap();
        c.apply(&Overrides::default(), None);
        assert_eq!(c.output_dir, PathBuf::from("from-file"));
        c.apply(&Overrides::default(), Some("from-env".into()));
        assert_eq!(c.output_dir, PathBuf::from("from-env"));
        let cli = Overrides {
            seed: Some(9),
            output_dir: Some("from-cli".into()),
            ..Default::default()
        };
        c.apply(&cli, Some("from-env".into()));
        assert_eq!(c.output_dir, PathBuf::from("from-cli"));
        assert_eq!(c.seed, Some(9));
    }

    #[test]
    fn seed_is_mandatory() {
        let c = RunConfig::default();
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("seed")));
    }

    #[test]
    fn digest_ignores_run_plumbing() {
        let a = RunConfig::from_toml_str(EXAMPLE).unwrap();
        let mut b = a.clone();
        b.seed = Some(99);
        b.jobs = 8;
        b.output_dir = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.cv.folds = 4;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn missing_data_file_is_named() {
        let mut c = RunConfig::from_toml_str("seed = 1").unwrap();
        c.data.path = Some("/nonexistent/features.csv".into());
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("/nonexistent/features.csv"), "{err}");
    }
}
