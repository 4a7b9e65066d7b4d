//! Quantum/classical feature fusion.
//!
//! Two branches embed the same image: a quanvolution followed by a linear
//! projection (`h_Q`) and a convolutional backbone (`h_C`), both of width
//! `d`. The joint vector is `h_Q ⊕ h_C` (quantum half first), optionally
//! with the quantum half scaled by a learned scalar temperature `γ`, and a
//! single linear classification handler maps it to two logits.
//!
//! * static fusion trains only the handler on embeddings extracted once
//!   and cached ([`shf_run`]);
//! * dynamic fusion trains everything end to end with per-group Adam
//!   settings ([`crate::train::dhf_step`]);
//! * temperature-scaled fusion additionally learns `γ`, initialised to 1
//!   ([`crate::train::tshf_step`]).

mod model;
mod optim;
mod shf;

pub use model::{
    BatchGradients, BranchNorm, FusionModel, ModelConfig, ModelGrads, ParamCount, ParamGroup,
    ParamInfo, QuantumBranch,
};
pub use optim::{GroupConfigs, Optimizer};
pub use shf::{
    extract_features, shf_run, shf_step, CacheRecord, FeatureCache, Provenance, ShfCaches,
    ShfOutcome,
};

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Strategy {
    /// Backbone plus a `d → 2` head.
    BaselineClassical,
    /// Quanvolution plus a `features → 2` head.
    BaselineQuantum,
    /// Static hybrid fusion: frozen extractors, handler-only training.
    Shf,
    /// Dynamic hybrid fusion: end-to-end joint training.
    Dhf,
    /// Temperature-scaled hybrid fusion.
    Tshf,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::BaselineClassical,
        Strategy::BaselineQuantum,
        Strategy::Shf,
        Strategy::Dhf,
        Strategy::Tshf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::BaselineClassical => "baseline_classical",
            Strategy::BaselineQuantum => "baseline_quantum",
            Strategy::Shf => "shf",
            Strategy::Dhf => "dhf",
            Strategy::Tshf => "tshf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn uses_quantum(self) -> bool {
        self != Strategy::BaselineClassical
    }

    pub fn uses_classical(self) -> bool {
        self != Strategy::BaselineQuantum
    }

    pub fn is_fusion(self) -> bool {
        matches!(self, Strategy::Shf | Strategy::Dhf | Strategy::Tshf)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The two branch embeddings of one image.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingPair {
    pub h_q: Vec<f64>,
    pub h_c: Vec<f64>,
}

impl EmbeddingPair {
    pub fn new(h_q: Vec<f64>, h_c: Vec<f64>) -> Result<Self> {
        let pair = Self { h_q, h_c };
        pair.check()?;
        Ok(pair)
    }

    pub fn dim(&self) -> usize {
        self.h_q.len()
    }

    fn check(&self) -> Result<()> {
        if self.h_q.len() != self.h_c.len() {
            return Err(Error::ShapeMismatch(format!(
                "branch widths differ: quantum {}, classical {}",
                self.h_q.len(),
                self.h_c.len()
            )));
        }
        if self.h_q.iter().chain(&self.h_c).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(())
    }
}

/// `h_joint = h_Q ⊕ h_C`.
pub fn concat_fuse(pair: &EmbeddingPair) -> Result<Vec<f64>> {
    pair.check()?;
    let mut out = Vec::with_capacity(2 * pair.dim());
    out.extend_from_slice(&pair.h_q);
    out.extend_from_slice(&pair.h_c);
    Ok(out)
}

/// `h_scaled = (γ h_Q) ⊕ h_C`.
pub fn temp_fuse(pair: &EmbeddingPair, gamma: f64) -> Result<Vec<f64>> {
    pair.check()?;
    if !gamma.is_finite() {
        return Err(Error::NonFinite("gamma"));
    }
    let mut out = Vec::with_capacity(2 * pair.dim());
    out.extend(pair.h_q.iter().map(|v| gamma * v));
    out.extend_from_slice(&pair.h_c);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TempFuseGrads {
    pub h_q: Vec<f64>,
    pub h_c: Vec<f64>,
    pub gamma: f64,
}

/// Backward of [`temp_fuse`]: `∂L/∂h_Q = γ ∂L/∂(γh_Q)`,
/// `∂L/∂γ = h_Q · ∂L/∂(γh_Q)`.
pub fn temp_fuse_backward(pair: &EmbeddingPair, gamma: f64, upstream: &[f64]) -> Result<TempFuseGrads> {
    pair.check()?;
    let d = pair.dim();
    if upstream.len() != 2 * d {
        return Err(Error::DimensionMismatch {
            what: "fused gradient",
            expected: 2 * d,
            got: upstream.len(),
        });
    }
    let (uq, uc) = upstream.split_at(d);
    Ok(TempFuseGrads {
        h_q: uq.iter().map(|u| gamma * u).collect(),
        h_c: uc.to_vec(),
        gamma: pair.h_q.iter().zip(uq).map(|(h, u)| h * u).sum(),
    })
}
