//! Embedding export for external visualisation.

use std::fmt::Write as _;
use std::path::Path;

use qvf_core::fusion::FeatureCache;

use crate::error::{write, Result};

/// CSV with header `label,q_0..q_{d-1},c_0..c_{d-1}`, one row per record.
/// Values are written with 17 significant digits.
pub fn embeddings_csv(cache: &FeatureCache) -> String {
    let d = cache.d;
    let mut out = String::from("label");
    for i in 0..d {
        write!(out, ",q_{i}").unwrap();
    }
    for i in 0..d {
        write!(out, ",c_{i}").unwrap();
    }
    out.push('\n');
    for r in &cache.records {
        write!(out, "{}", r.label).unwrap();
        for v in r.pair.h_q.iter().chain(&r.pair.h_c) {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn export_embeddings(cache: &FeatureCache, path: &Path) -> Result<()> {
    write(path, embeddings_csv(cache))
}
