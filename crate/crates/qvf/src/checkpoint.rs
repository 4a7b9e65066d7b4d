//! Binary model checkpoints.
//!
//! Layout: magic `QVFM`, format version (`u32` LE), then one record per
//! tensor until end of file: name length (`u32` LE), UTF-8 name, rank
//! (`u64` LE), each dimension (`u64` LE), then the values as `f64` LE.

use std::path::Path;

use qvf_core::fusion::FusionModel;
use qvf_core::quanv::{QuanvConfig, QuanvState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read, write, Error, Reader, Result};

pub const MAGIC: &[u8; 4] = b"QVFM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn encode(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader::new(path, bytes);
    if &r.array::<4>()? != MAGIC {
        return Err(r.error("not a model checkpoint (bad magic)"));
    }
    let version = r.u32_le()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported checkpoint version {version}")));
    }
    let mut out = Vec::new();
    while r.finish().is_err() {
        let len = r.u32_le()? as usize;
        let name = r.string(len)?;
        let rank = r.u64_le()? as usize;
        let shape = (0..rank).map(|_| Ok(r.u64_le()? as usize)).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count.ok_or_else(|| r.error(format!("{name}: shape overflows")))?;
        let values = r.f64s(count)?;
        out.push(NamedTensor { name, shape, values });
    }
    Ok(out)
}

pub fn model_tensors(model: &FusionModel) -> Vec<NamedTensor> {
    model
        .state_tensors()
        .into_iter()
        .map(|(name, shape, values)| NamedTensor { name, shape, values })
        .collect()
}

pub fn save(model: &FusionModel, path: &Path) -> Result<()> {
    write(path, encode(&model_tensors(model)))
}

/// Loads tensors into a model built from the matching configuration. Every
/// model tensor must be present exactly once.
pub fn load_into(model: &mut FusionModel, path: &Path) -> Result<()> {
    let tensors = decode(path, &read(path)?)?;
    let mut expected: Vec<String> = model.state_tensors().into_iter().map(|t| t.0).collect();
    for t in &tensors {
        let Some(pos) = expected.iter().position(|n| *n == t.name) else {
            return Err(Error::format(path, format!("unexpected or repeated tensor {}", t.name)));
        };
        expected.swap_remove(pos);
        model
            .load_state_tensor(&t.name, &t.shape, &t.values)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    if !expected.is_empty() {
        return Err(Error::format(path, format!("missing tensors: {}", expected.join(", "))));
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the encoded branch tensors (everything outside the
/// handler), used to prove that static fusion left them untouched.
pub fn branch_hash(model: &FusionModel) -> String {
    use qvf_core::fusion::ParamGroup;
    let groups: std::collections::HashMap<String, ParamGroup> =
        model.params().into_iter().map(|(i, _)| (i.name, i.group)).collect();
    let branch: Vec<NamedTensor> = model_tensors(model)
        .into_iter()
        .filter(|t| groups.get(&t.name) != Some(&ParamGroup::Handler))
        .collect();
    sha256_hex(&encode(&branch))
}

/// Circuit angles exported as JSON next to the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFile {
    pub seed: u64,
    pub theta_fix: Vec<f64>,
}

pub fn save_theta(config: &QuanvConfig, state: &QuanvState, path: &Path) -> Result<()> {
    let file = ThetaFile {
        seed: config.seed,
        theta_fix: state.theta().to_vec(),
    };
    write(path, serde_json::to_vec_pretty(&file).expect("serialisable"))
}

pub fn load_theta(config: &QuanvConfig, path: &Path) -> Result<QuanvState> {
    let file: ThetaFile = serde_json::from_slice(&read(path)?).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    if file.seed != config.seed {
        return Err(Error::format(
            path,
            format!("angles were drawn with seed {}, config uses {}", file.seed, config.seed),
        ));
    }
    Ok(QuanvState::from_theta(config, file.theta_fix)?)
}
