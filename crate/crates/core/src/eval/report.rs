//! Benchmark records, aggregation into the detector × subclass table, and
//! the two output files (per-fold CSV and rendered table).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::util;

/// Outcome of one (detector, subclass, fold) job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub detector: DetectorKind,
    pub top_class: String,
    pub subclass: String,
    pub fold: usize,
    pub auroc: Option<f64>,
    pub error: Option<String>,
    pub n_train: usize,
    pub n_ts2: usize,
    pub n_outliers: usize,
}

impl FoldRecord {
    fn sort_key(&self) -> (usize, &str, &str, usize) {
        (self.detector as usize, &self.top_class, &self.subclass, self.fold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Done {
        mean: f64,
        std: f64,
        folds: Vec<f64>,
    },
    /// At least one fold failed; holds the first error.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub detector: DetectorKind,
    pub top_class: String,
    pub subclass: String,
    pub outcome: CellOutcome,
}

impl Cell {
    pub fn mean(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Done { mean, .. } => Some(*mean),
            CellOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub config_digest: String,
    /// Column order: (top class, subclass).
    pub columns: Vec<(String, String)>,
    pub detectors: Vec<DetectorKind>,
    /// Sorted by (detector, top class, subclass, fold).
    pub folds: Vec<FoldRecord>,
    pub cells: Vec<Cell>,
}

/// Detector with the highest mean; ties go to the earlier entry.
pub fn best_detector(column: &[(DetectorKind, f64)]) -> Option<DetectorKind> {
    column
        .iter()
        .filter(|(_, m)| !m.is_nan())
        .fold(None::<(DetectorKind, f64)>, |best, &(k, m)| match best {
            Some((_, bm)) if bm >= m => best,
            _ => Some((k, m)),
        })
        .map(|(k, _)| k)
}

impl BenchmarkReport {
    pub fn new(
        seed: u64,
        config_digest: String,
        detectors: Vec<DetectorKind>,
        columns: Vec<(String, String)>,
        mut folds: Vec<FoldRecord>,
    ) -> Self {
        folds.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let mut grouped: BTreeMap<(usize, &str, &str), Vec<&FoldRecord>> = BTreeMap::new();
        for r in &folds {
            grouped
                .entry((r.detector as usize, r.top_class.as_str(), r.subclass.as_str()))
                .or_default()
                .push(r);
        }
        let mut cells = Vec::new();
        for &d in &detectors {
            for (top, sub) in &columns {
                let records = grouped.get(&(d as usize, top.as_str(), sub.as_str()));
                let outcome = match records {
                    None => CellOutcome::Failed("no folds ran".into()),
                    Some(rs) => match rs.iter().find_map(|r| r.error.clone()) {
                        Some(e) => CellOutcome::Failed(e),
                        None => {
                            let values: Vec<f64> = rs.iter().filter_map(|r| r.auroc).collect();
                            CellOutcome::Done {
                                mean: util::mean(&values),
                                std: util::sample_std(&values),
                                folds: values,
                            }
                        }
                    },
                };
                cells.push(Cell {
                    detector: d,
                    top_class: top.clone(),
                    subclass: sub.clone(),
                    outcome,
                });
            }
        }
        Self {
            seed,
            config_digest,
            columns,
            detectors,
            folds,
            cells,
        }
    }

    pub fn cell(&self, detector: DetectorKind, subclass: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.detector == detector && c.subclass == subclass)
    }

    pub fn best_in_column(&self, subclass: &str) -> Option<DetectorKind> {
        let column: Vec<(DetectorKind, f64)> = self
            .cells
            .iter()
            .filter(|c| c.subclass == subclass)
            .filter_map(|c| c.mean().map(|m| (c.detector, m)))
            .collect();
        best_detector(&column)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Failed(_)))
            .count()
    }

    /// 0 when every cell completed, 2 on partial completion, 1 when nothing did.
    pub fn exit_code(&self) -> i32 {
        let failed = self.failed_cells();
        if failed == 0 && !self.cells.is_empty() {
            0
        } else if failed < self.cells.len() {
            2
        } else {
            1
        }
    }

    fn header(&self) -> String {
        format!("# seed: {}\n# config_digest: {}\n", self.seed, self.config_digest)
    }

    /// One row per detector × subclass × fold, preceded by `#` provenance lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::io("<results>", e);
        out.write_all(self.header().as_bytes()).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("writing results: {e}"));
        w.write_record([
            "detector",
            "top_class",
            "subclass",
            "fold",
            "auroc",
            "n_train",
            "n_ts2",
            "n_outliers",
            "error",
        ])
        .map_err(csv_err)?;
        for r in &self.folds {
            w.write_record([
                r.detector.name().to_string(),
                r.top_class.clone(),
                r.subclass.clone(),
                r.fold.to_string(),
                r.auroc.map(|a| a.to_string()).unwrap_or_default(),
                r.n_train.to_string(),
                r.n_ts2.to_string(),
                r.n_outliers.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io)
    }

    /// Rows are detectors, columns held-out subclasses grouped by top class;
    /// the best mean per column carries a `*`.
    pub fn render_table(&self) -> String {
        let mut cols: Vec<String> = vec!["Detector".into()];
        cols.extend(self.columns.iter().map(|(_, s)| s.clone()));
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut tops = vec![String::new()];
        tops.extend(self.columns.iter().map(|(t, _)| t.clone()));
        rows.push(tops);
        rows.push(cols);
        let best: Vec<Option<DetectorKind>> = self.columns.iter().map(|(_, s)| self.best_in_column(s)).collect();
        for &d in &self.detectors {
            let mut row = vec![d.label().to_string()];
            for ((_, sub), b) in self.columns.iter().zip(&best) {
                let text = match self.cell(d, sub).map(|c| &c.outcome) {
                    Some(CellOutcome::Done { mean, std, .. }) => {
                        let flag = if *b == Some(d) { "*" } else { "" };
                        format!("{mean:.3} ± {std:.3}{flag}")
                    }
                    _ => "FAILED".into(),
                };
                row.push(text);
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = self.header();
        out.push_str("# * best mean AUROC in column; mean ± sample std over folds\n");
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "| {} |", line.join(" | "));
            if i == 1 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(d: DetectorKind, sub: &str, fold: usize, auroc: Option<f64>) -> FoldRecord {
        FoldRecord {
            detector: d,
            top_class: "t".into(),
            subclass: sub.into(),
            fold,
            auroc,
            error: auroc.is_none().then(|| "boom".to_string()),
            n_train: 10,
            n_ts2: 10,
            n_outliers: 1,
        }
    }

    fn report(records: Vec<FoldRecord>) -> BenchmarkReport {
        BenchmarkReport::new(
            7,
            "abc".into(),
            vec![DetectorKind::IForest, DetectorKind::Mcdsvdd],
            vec![("t".into(), "A".into()), ("t".into(), "B".into())],
            records,
        )
    }

    #[test]
    fn best_detector_takes_the_larger_mean() {
        use DetectorKind::*;
        assert_eq!(best_detector(&[(Ae, 0.701), (Mcdsvdd, 0.706)]), Some(Mcdsvdd));
        assert_eq!(best_detector(&[(Ae, 0.5), (Vae, 0.5)]), Some(Ae));
        assert_eq!(best_detector(&[]), None);
    }

    #[test]
    fn aggregation_is_order_independent() {
        use DetectorKind::*;
        let mut recs = Vec::new();
        for f in 0..3 {
            recs.push(record(IForest, "A", f, Some(0.6 + f as f64 * 0.1)));
            recs.push(record(IForest, "B", f, Some(0.5)));
            recs.push(record(Mcdsvdd, "A", f, Some(0.9)));
            recs.push(record(Mcdsvdd, "B", f, if f == 1 { None } else { Some(0.9) }));
        }
        let a = report(recs.clone());
        recs.reverse();
        let b = report(recs);
        assert_eq!(a, b);
        match &a.cell(IForest, "A").unwrap().outcome {
            CellOutcome::Done { mean, std, folds } => {
                assert_eq!(folds.len(), 3);
                assert!((mean - 0.7).abs() < 1e-12);
                assert!((std - 0.1).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            a.cell(Mcdsvdd, "B").unwrap().outcome,
            CellOutcome::Failed("boom".into())
        );
        assert_eq!(a.best_in_column("A"), Some(Mcdsvdd));
        // the failed cell leaves IForest as the only candidate
        assert_eq!(a.best_in_column("B"), Some(IForest));
        assert_eq!(a.exit_code(), 2);
    }

    #[test]
    fn exit_codes() {
        use DetectorKind::*;
        let ok: Vec<FoldRecord> = [IForest, Mcdsvdd]
            .iter()
            .flat_map(|&d| ["A", "B"].map(|s| record(d, s, 0, Some(0.5))))
            .collect();
        assert_eq!(report(ok).exit_code(), 0);
        let bad: Vec<FoldRecord> = [IForest, Mcdsvdd]
            .iter()
            .flat_map(|&d| ["A", "B"].map(|s| record(d, s, 0, None)))
            .collect();
        assert_eq!(report(bad).exit_code(), 1);
    }

    #[test]
    fn outputs_carry_provenance() {
        use DetectorKind::*;
        let recs = vec![
            record(IForest, "A", 0, Some(0.25)),
            record(IForest, "B", 0, Some(0.5)),
            record(Mcdsvdd, "A", 0, Some(0.75)),
            record(Mcdsvdd, "B", 0, None),
        ];
        let r = report(recs);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed: 7");
        assert_eq!(lines[1], "# config_digest: abc");
        assert!(lines[2].starts_with("detector,top_class,subclass,fold,auroc"));
        assert_eq!(lines.len(), 3 + 4);
        assert_eq!(lines[3], "iforest,t,A,0,0.25,10,10,1,");
        let table = r.render_table();
        assert!(table.starts_with("# seed: 7\n# config_digest: abc\n"));
        assert!(table.contains("0.750 ± 0.000*"));
        assert!(table.contains("FAILED"));
        assert!(table.contains("MCDSVDD"));
    }
}
