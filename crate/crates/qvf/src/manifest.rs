//! Expected per-split sizes and class balance of named datasets.

use std::collections::BTreeMap;
use std::path::Path;

use qvf_core::data::{LabeledDataset, Split};
use serde::{Deserialize, Serialize};

use crate::error::{read, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
}

impl SplitCounts {
    pub fn of(dataset: &LabeledDataset) -> Self {
        Self {
            total: dataset.len(),
            positive: dataset.positives(),
            negative: dataset.negatives(),
        }
    }
}

/// JSON form: `{"train": {"total": .., "positive": .., "negative": ..}, ..}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitManifest {
    pub splits: BTreeMap<String, SplitCounts>,
}

impl SplitManifest {
    pub fn new(train: SplitCounts, val: SplitCounts, test: SplitCounts) -> Result<Self> {
        let m = Self {
            splits: [("train", train), ("val", val), ("test", test)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in &self.splits {
            if Split::from_name(name).is_none() {
                return Err(Error::Config(format!("manifest has unknown split {name:?}")));
            }
            if c.positive + c.negative != c.total {
                return Err(Error::Config(format!(
                    "manifest split {name}: {} positive + {} negative != {} total",
                    c.positive, c.negative, c.total
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_slice(&read(path)?).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn get(&self, split: Split) -> Option<&SplitCounts> {
        self.splits.get(split.name())
    }

    /// Built-in manifests for the benchmark datasets, by lower-case name.
    pub fn named(name: &str) -> Option<Self> {
        let c = |total, positive| SplitCounts {
            total,
            positive,
            negative: total - positive,
        };
        let m = match name {
            "breastmnist" => Self::new(c(546, 399), c(78, 57), c(156, 114)),
            "inbreast" => Self::new(c(179, 117), c(38, 28), c(36, 25)),
            "bus-uclm" => Self::new(c(210, 45), c(28, 26), c(26, 19)),
            _ => return None,
        };
        Some(m.expect("built-in manifests are consistent"))
    }
}

/// Checks every dataset against its manifest entry. Empty splits are always
/// an error.
pub fn validate_splits(datasets: &[&LabeledDataset], manifest: &SplitManifest) -> Result<()> {
    for d in datasets {
        let split = d.split().name().to_string();
        if d.is_empty() {
            return Err(Error::SplitMismatch {
                split,
                message: "split is empty".into(),
            });
        }
        let expected = manifest.get(d.split()).ok_or_else(|| Error::SplitMismatch {
            split: split.clone(),
            message: "not listed in the manifest".into(),
        })?;
        let got = SplitCounts::of(d);
        if got != *expected {
            return Err(Error::SplitMismatch {
                split,
                message: format!(
                    "expected {} images ({} positive, {} negative), found {} ({} positive, {} negative)",
                    expected.total, expected.positive, expected.negative, got.total, got.positive, got.negative
                ),
            });
        }
    }
    Ok(())
}
