//! Binary-classification metrics. The positive class is label 1.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<Confusion> {
    if labels.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions",
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let mut c = Confusion::default();
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::Metric(format!("non-binary label/prediction ({l}, {p})"))),
        }
    }
    Ok(c)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub auc: f64,
    /// `(false-positive rate, true-positive rate)` from `(0, 0)` to `(1, 1)`,
    /// one point per distinct score threshold.
    pub points: Vec<(f64, f64)>,
}

/// AUC from the Mann–Whitney rank statistic (ties count ½) and the ROC
/// staircase from a descending threshold sweep.
pub fn auc_roc(labels: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            what: "scores",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Metric("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes (positives {pos}, negatives {neg})"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of the positives; tied groups share their average
    // rank, which doubled is the integer (first + last).
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled = (i + 1 + j + 1) as u64;
        let group_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        rank2_pos += doubled * group_pos;
        i = j + 1;
    }
    let (p, n) = (pos as u64, neg as u64);
    let u2 = rank2_pos - p * (p + 1);
    let auc = u2 as f64 / (2 * p * n) as f64;

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let top = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == top {
            if labels[order[k - 1]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { auc, points })
}

/// Trapezoidal area under a ROC point sequence.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub split: String,
    pub seed: Option<u64>,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub roc_points: Vec<(f64, f64)>,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub warnings: Vec<String>,
}

impl MetricsReport {
    /// Scores are positive-class probabilities; a score `>= threshold` is
    /// predicted positive.
    pub fn from_scores(
        split: &str,
        seed: Option<u64>,
        labels: &[u8],
        scores: &[f64],
        threshold: f64,
    ) -> Result<Self> {
        let predictions: Vec<u8> = scores.iter().map(|&s| u8::from(s >= threshold)).collect();
        let c = confusion(labels, &predictions)?;
        let roc = auc_roc(labels, scores)?;
        let mut warnings = Vec::new();
        let mut ratio = |num: usize, den: usize, name: &str| {
            if den == 0 {
                warnings.push(format!("{name}: zero denominator, reported as 0"));
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy");
        let precision = ratio(c.tp, c.tp + c.fp, "precision");
        let recall = ratio(c.tp, c.tp + c.fn_, "recall");
        let f1v = f1(precision, recall);
        if precision + recall == 0.0 {
            warnings.push("f1: precision and recall are both 0, reported as 0".into());
        }
        Ok(Self {
            split: split.into(),
            seed,
            threshold,
            tp: c.tp,
            fp: c.fp,
            tn: c.tn,
            fn_: c.fn_,
            accuracy,
            precision,
            recall,
            f1: f1v,
            auc: roc.auc,
            roc_points: roc.points,
            warnings,
        })
    }

    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
        }
    }
}
