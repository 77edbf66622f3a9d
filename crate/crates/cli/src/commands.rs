use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use log::{info, warn};
use mcdsvdd::card::{ModelCard, TrainingManifest};
use mcdsvdd::config::{Overrides, RunConfig, OUTPUT_DIR_ENV};
use mcdsvdd::data::{read_dataset, stratified_split, write_dataset_file, ParseOptions};
use mcdsvdd::eval::{full_benchmark, BenchmarkOptions, DetectorSpec, FoldRecord, ScenarioFit};
use mcdsvdd::util;
use mcdsvdd::{DetectorKind, FittedDetector, Scenario, SyntheticSpec};

fn resolve(config: &Path, overrides: Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply(&overrides, std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from));
    cfg.validate()?;
    Ok(cfg)
}

/// File-name safe form of a class name (`CV/Nova` -> `CV-Nova`).
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn bench(
    config: &Path,
    seed: Option<u64>,
    detectors: Option<Vec<DetectorKind>>,
    jobs: Option<usize>,
    output_dir: Option<PathBuf>,
) -> Result<u8> {
    let cfg = resolve(
        config,
        Overrides {
            seed,
            output_dir,
            jobs,
            detectors,
        },
    )?;
    let seed = cfg.seed()?;
    let digest = cfg.digest();
    let (dataset, ingest) = cfg.load_dataset()?;
    if ingest.imputed > 0 {
        warn!("imputed {} missing cells with column medians", ingest.imputed);
    }
    let columns = cfg.columns(dataset.taxonomy())?;
    let specs: Vec<DetectorSpec> = cfg
        .detectors
        .iter()
        .map(|&k| DetectorSpec::new(k, cfg.detector.clone()))
        .collect();
    let out = &cfg.output_dir;
    let cards = out.join("cards");
    create_dir(&cards)?;
    info!(
        "benchmark: {} rows, {} detectors, seed {seed}, config {digest}",
        dataset.len(),
        specs.len()
    );

    // one card per cell, from its first fold
    let taxonomy = dataset.taxonomy().as_ref().clone();
    let save_card = |r: &FoldRecord, s: &Scenario, fit: &ScenarioFit| {
        if r.fold != 0 {
            return;
        }
        let Some(model) = fit.fitted.clone() else { return };
        let manifest = TrainingManifest::from_dataset(&s.train, &r.top_class, &r.subclass);
        let fold_seed = mcdsvdd::eval::protocol::fold_seed(seed, r.detector.name(), &r.top_class, &r.subclass, 0);
        let card = ModelCard::new(
            model,
            &fit.report,
            &cfg.detector,
            &digest,
            fold_seed,
            &taxonomy,
            manifest,
        );
        let path = cards.join(format!("{}__{}.card.json", r.detector.name(), slug(&r.subclass)));
        if let Err(e) = card.save(&path) {
            warn!("{e}");
        }
    };
    let options = BenchmarkOptions {
        cv: cfg.cv.clone(),
        columns,
        jobs: cfg.jobs,
        config_digest: digest.clone(),
    };
    let report = full_benchmark(&dataset, &specs, &options, seed, Some(&save_card))?;

    let results = out.join("results.csv");
    let file = fs::File::create(&results).with_context(|| format!("creating {}", results.display()))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let table = out.join("table.md");
    fs::write(&table, report.render_table()).with_context(|| format!("writing {}", table.display()))?;
    let errors: Vec<&FoldRecord> = report.folds.iter().filter(|f| f.error.is_some()).collect();
    if !errors.is_empty() {
        let path = out.join("errors.jsonl");
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        for e in errors {
            writeln!(f, "{}", serde_json::to_string(e)?)?;
        }
    }
    print!("{}", report.render_table());
    info!("wrote {} and {}", results.display(), table.display());
    match report.exit_code() {
        0 => Ok(0),
        code => {
            warn!("{} of {} cells failed", report.failed_cells(), report.cells.len());
            Ok(code as u8)
        }
    }
}

/// Returns the card path.
pub fn train(
    config: &Path,
    detector: DetectorKind,
    top_class: &str,
    outlier: &str,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> Result<PathBuf> {
    let cfg = resolve(
        config,
        Overrides {
            seed,
            output_dir,
            ..Default::default()
        },
    )?;
    let seed = cfg.seed()?;
    let digest = cfg.digest();
    let (dataset, _) = cfg.load_dataset()?;
    dataset.taxonomy().check_pair(top_class, outlier)?;
    // the same 80/20 split the benchmark uses
    let (train, _) = stratified_split(&dataset, cfg.cv.test_fraction, util::derive_seed(seed, &["split"]))?;
    let inliers = train.filter(|s| s.top_class == top_class && s.subclass != outlier);
    anyhow::ensure!(
        !inliers.is_empty(),
        "no training rows for `{top_class}` without `{outlier}`"
    );
    let fit_seed = util::derive_seed(seed, &[detector.name(), top_class, outlier, "train"]);
    let empty = inliers.filter(|_| false);
    let (model, report) = FittedDetector::fit(detector, &cfg.detector, &inliers, &empty, fit_seed)
        .with_context(|| format!("training {detector} on {top_class} without {outlier}"))?;
    if let Some(w) = &report.collapse_warning {
        warn!("{w}");
    }
    let manifest = TrainingManifest::from_dataset(&inliers, top_class, outlier);
    let taxonomy = dataset.taxonomy().as_ref().clone();
    let card = ModelCard::new(model, &report, &cfg.detector, &digest, fit_seed, &taxonomy, manifest);

    create_dir(&cfg.output_dir)?;
    let stem = format!("{}__{}__{}", detector.name(), slug(top_class), slug(outlier));
    let card_path = cfg.output_dir.join(format!("{stem}.card.json"));
    card.save(&card_path)?;
    // scores of every input row at training time, for replay checks
    let scores = card.model.score_dataset(&dataset)?;
    let ids: Vec<&str> = dataset.ids();
    write_scores(&cfg.output_dir.join(format!("{stem}.scores.csv")), &card, &ids, &scores)?;
    info!("wrote {}", card_path.display());
    Ok(card_path)
}

fn write_scores(path: &Path, card: &ModelCard, ids: &[&str], scores: &[f64]) -> Result<()> {
    let mut text = format!(
        "# seed: {}\n# config_digest: {}\n# normalizer_digest: {}\nid,score\n",
        card.seed, card.config_digest, card.normalizer_digest
    );
    for (id, s) in ids.iter().zip(scores) {
        text.push_str(&format!("{id},{s}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn score(model: &Path, input: &Path, output: &Path) -> Result<()> {
    let card = ModelCard::load(model)?;
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let (ids, scores) = if bytes.iter().all(u8::is_ascii_whitespace) {
        (Vec::new(), Vec::new())
    } else {
        // missing cells are filled from the training medians by the normalizer
        let options = ParseOptions {
            impute: false,
            ..Default::default()
        };
        let (data, _) = read_dataset(bytes.as_slice(), Arc::new(card.taxonomy.clone()), &options)
            .with_context(|| format!("reading {}", input.display()))?;
        if !data.is_empty() && data.dim() != card.model.dim() {
            anyhow::bail!(mcdsvdd::Error::Shape {
                expected: card.model.dim(),
                actual: data.dim(),
            });
        }
        let scores = card.model.score_dataset(&data)?;
        (data.ids().into_iter().map(String::from).collect(), scores)
    };
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    write_scores(output, &card, &ids, &scores)?;
    info!("scored {} rows into {}", scores.len(), output.display());
    Ok(())
}

pub fn synth(spec: &Path, seed: u64, output: &Path) -> Result<()> {
    let spec = SyntheticSpec::load(spec)?;
    let data = spec.generate(seed)?;
    write_dataset_file(&data, output)?;
    info!("wrote {} rows to {}", data.len(), output.display());
    Ok(())
}
