//! Feature cache files for static fusion.
//!
//! Layout: magic `QVFC`, version (`u32` LE), split-name length (`u32` LE)
//! and UTF-8 name, record count (`u64` LE), width `d` (`u64` LE), then per
//! record the label byte, `h_q` and `h_c` as `d` little-endian `f64` each.
//! Provenance lives in a JSON sidecar (`<file>.json`).

use std::path::{Path, PathBuf};

use qvf_core::data::Split;
use qvf_core::fusion::{CacheRecord, EmbeddingPair, FeatureCache, Provenance};

use crate::error::{read, write, Error, Reader, Result};

pub const MAGIC: &[u8; 4] = b"QVFC";
pub const VERSION: u32 = 1;

pub fn encode(cache: &FeatureCache) -> Vec<u8> {
    let name = cache.split.name().as_bytes();
    let mut out = Vec::with_capacity(32 + cache.len() * (1 + 16 * cache.d));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(cache.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cache.d as u64).to_le_bytes());
    for r in &cache.records {
        out.push(r.label);
        for v in r.pair.h_q.iter().chain(&r.pair.h_c) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

pub fn save(cache: &FeatureCache, path: &Path) -> Result<()> {
    write(path, encode(cache))?;
    let json = serde_json::to_vec_pretty(&cache.provenance).expect("serialisable");
    write(&sidecar_path(path), json)
}

pub fn load(path: &Path) -> Result<FeatureCache> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes);
    if &r.array::<4>()? != MAGIC {
        return Err(r.error("not a feature cache (bad magic)"));
    }
    let version = r.u32_le()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported cache version {version}")));
    }
    let len = r.u32_le()? as usize;
    let name = r.string(len)?;
    let split = Split::from_name(&name).ok_or_else(|| r.error(format!("unknown split {name:?}")))?;
    let count = r.u64_le()? as usize;
    let d = r.u64_le()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let label = r.u8()?;
        let h_q = r.f64s(d)?;
        let h_c = r.f64s(d)?;
        let pair = EmbeddingPair::new(h_q, h_c).map_err(|e| r.error(e.to_string()))?;
        records.push(CacheRecord { label, pair });
    }
    r.finish()?;
    let sidecar = sidecar_path(path);
    let provenance: Provenance = serde_json::from_slice(&read(&sidecar)?).map_err(|source| Error::Json {
        path: sidecar.clone(),
        source,
    })?;
    Ok(FeatureCache::new(split, d, records, provenance)?)
}
