//! Per-repeat results, summary statistics and report output.

use std::fmt::Write as _;
use std::path::Path;

use hybridae::metrics::{mean, population_std};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Experiment,
    Ablation,
    Compare,
}

/// One method (a pipeline stage or an autoencoder variant) across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub name: String,
    /// Test accuracy per repeat; `None` marks a failed repeat.
    pub accuracies: Vec<Option<f64>>,
    /// Mean over successful repeats.
    pub mean: f64,
    /// Population standard deviation over successful repeats.
    pub std: f64,
    pub n_features: Vec<Option<usize>>,
    pub seconds: Vec<f64>,
}

impl MethodRow {
    pub fn new(name: impl Into<String>, accuracies: Vec<Option<f64>>, n_features: Vec<Option<usize>>, seconds: Vec<f64>) -> Self {
        let ok: Vec<f64> = accuracies.iter().flatten().copied().collect();
        let (mean, std) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { (mean(&ok), population_std(&ok)) };
        Self { name: name.into(), accuracies, mean, std, n_features, seconds }
    }

    pub fn successful(&self) -> Vec<f64> {
        self.accuracies.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatInfo {
    pub repeat: usize,
    pub seed: u64,
    /// SHA-256 of the sorted train/test row indices, shared by every method
    /// of the repeat.
    pub train_digest: String,
    pub test_digest: String,
    pub n_train: usize,
    pub n_test: usize,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub dataset: String,
    pub std_convention: String,
    pub rows: Vec<MethodRow>,
    pub repeats: Vec<RepeatInfo>,
    pub config: ExperimentConfig,
    pub total_seconds: f64,
}

impl Report {
    pub fn row(&self, name: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn failed_repeats(&self) -> Vec<usize> {
        self.repeats.iter().filter(|r| r.error.is_some()).map(|r| r.repeat).collect()
    }

    /// A copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Report {
        let mut r = self.clone();
        r.total_seconds = 0.0;
        for row in &mut r.rows {
            row.seconds.iter_mut().for_each(|s| *s = 0.0);
        }
        for rep in &mut r.repeats {
            rep.seconds = 0.0;
        }
        r
    }

    /// Delimited table: one line per method, accuracies in percent.
    pub fn to_csv(&self) -> String {
        let n = self.repeats.len();
        let mut out = String::from("method");
        for r in 1..=n {
            write!(out, ",repeat_{r}").unwrap();
        }
        out.push_str(",mean,std,n_ok,seconds_total\n");
        for row in &self.rows {
            out.push_str(&csv_field(&row.name));
            for a in &row.accuracies {
                match a {
                    Some(v) => write!(out, ",{:.4}", 100.0 * v).unwrap(),
                    None => out.push_str(",failed"),
                }
            }
            writeln!(
                out,
                ",{:.4},{:.4},{},{:.3}",
                100.0 * row.mean,
                100.0 * row.std,
                row.successful().len(),
                row.seconds.iter().sum::<f64>()
            )
            .unwrap();
        }
        out
    }

    /// Aligned table for people.
    pub fn to_table(&self) -> String {
        let n = self.repeats.len();
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        writeln!(
            out,
            "{:?} on {} ({} repeat(s), std = {} standard deviation)",
            self.kind, self.dataset, n, self.std_convention
        )
        .unwrap();
        write!(out, "{:<name_w$}  {:>16}", "method", "mean ± std (%)").unwrap();
        for r in 1..=n {
            write!(out, "  {:>7}", format!("r{r}")).unwrap();
        }
        out.push_str("  features  seconds\n");
        for row in &self.rows {
            let summary = format!("{:.2} ± {:.2}", 100.0 * row.mean, 100.0 * row.std);
            write!(out, "{:<name_w$}  {:>16}", row.name, summary).unwrap();
            for a in &row.accuracies {
                let cell = a.map_or("failed".to_string(), |v| format!("{:.2}", 100.0 * v));
                write!(out, "  {cell:>7}").unwrap();
            }
            let feats = row.n_features.iter().flatten().next().map_or("-".to_string(), |f| f.to_string());
            writeln!(out, "  {feats:>8}  {:>7.1}", row.seconds.iter().sum::<f64>()).unwrap();
        }
        for rep in &self.repeats {
            if let Some(e) = &rep.error {
                writeln!(out, "repeat {} failed: {e}", rep.repeat + 1).unwrap();
            }
        }
        writeln!(out, "total {:.1}s", self.total_seconds).unwrap();
        out
    }

    /// Write the delimited table to `path` and the full report, including the
    /// resolved configuration, next to it as JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| HarnessError::io(path, e))?;
        let json_path = path.with_extension("json");
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json_path, json).map_err(|e| HarnessError::io(&json_path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
