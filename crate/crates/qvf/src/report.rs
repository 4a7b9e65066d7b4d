//! Metric tables: per-run JSON/CSV and a cross-run comparison.

use std::fmt::Write as _;
use std::path::Path;

use qvf_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

/// What produced a set of reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLabel {
    pub strategy: String,
    pub backbone: Option<String>,
    pub quantum_mode: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub run: RunLabel,
    pub reports: Vec<MetricsReport>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn row(r: &MetricsReport) -> [String; 5] {
    [pct(r.accuracy), pct(r.precision), pct(r.recall), pct(r.f1), pct(r.auc)]
}

/// `split,Acc,Prec,Rec,F1,AUC` with percentages to two decimals.
pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("split,Acc,Prec,Rec,F1,AUC\n");
    for r in reports {
        writeln!(out, "{},{}", r.split, row(r).join(",")).unwrap();
    }
    out
}

pub fn write_metrics(dir: &Path, file: &MetricsFile) -> Result<()> {
    write(&dir.join(METRICS_JSON), serde_json::to_vec_pretty(file).expect("serialisable"))?;
    write(&dir.join(METRICS_CSV), metrics_csv(&file.reports))
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    serde_json::from_slice(&read(path)?).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<(String, RunLabel, MetricsReport)>,
    /// Index of the row with the highest test F1 (AUC breaks ties).
    pub best: usize,
}

/// Collects the test-split report of every run directory directly under
/// `run_dir`, sorted by directory name.
pub fn compare_runs(run_dir: &Path) -> Result<Comparison> {
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut dirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(METRICS_JSON).is_file())
        .collect();
    dirs.sort();
    let mut rows = Vec::new();
    for dir in dirs {
        let file = read_metrics(&dir.join(METRICS_JSON))?;
        let test = file
            .reports
            .into_iter()
            .find(|r| r.split == "test")
            .ok_or_else(|| Error::format(dir.join(METRICS_JSON), "no test report"))?;
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        rows.push((name, file.run, test));
    }
    if rows.is_empty() {
        return Err(Error::format(run_dir, format!("no run directories containing {METRICS_JSON}")));
    }
    let best = (0..rows.len())
        .max_by(|&a, &b| {
            let key = |i: usize| (rows[i].2.f1, rows[i].2.auc);
            key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
        })
        .expect("non-empty");
    Ok(Comparison { rows, best })
}

impl Comparison {
    pub fn csv(&self) -> String {
        let mut out = String::from("run,strategy,backbone,quantum,seed,Acc,Prec,Rec,F1,AUC,best\n");
        for (i, (name, l, r)) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{name},{},{},{},{},{},{}",
                l.strategy,
                l.backbone.as_deref().unwrap_or(""),
                l.quantum_mode.as_deref().unwrap_or(""),
                l.seed,
                row(r).join(","),
                u8::from(i == self.best)
            )
            .unwrap();
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from(
            "| Run | Strategy | Backbone | Quantum | Seed | Acc | Prec | Rec | F1 | AUC |\n\
             |---|---|---|---|---|---|---|---|---|---|\n",
        );
        for (i, (name, l, r)) in self.rows.iter().enumerate() {
            let cells = row(r).map(|c| if i == self.best { format!("**{c}**") } else { c });
            writeln!(
                out,
                "| {name}{} | {} | {} | {} | {} | {} |",
                if i == self.best { " (best)" } else { "" },
                l.strategy,
                l.backbone.as_deref().unwrap_or("-"),
                l.quantum_mode.as_deref().unwrap_or("-"),
                l.seed,
                cells.join(" | ")
            )
            .unwrap();
        }
        out
    }
}
