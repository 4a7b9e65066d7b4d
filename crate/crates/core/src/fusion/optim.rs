use alloc::vec::Vec;

use super::model::{FusionModel, ModelGrads, ParamGroup};
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, AdamState};

/// Adam settings per parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GroupConfigs {
    pub quantum: AdamConfig,
    pub classical: AdamConfig,
    pub handler: AdamConfig,
}

impl GroupConfigs {
    pub fn uniform(config: AdamConfig) -> Self {
        Self {
            quantum: config,
            classical: config,
            handler: config,
        }
    }

    pub fn get(&self, group: ParamGroup) -> &AdamConfig {
        match group {
            ParamGroup::Quantum => &self.quantum,
            ParamGroup::Classical => &self.classical,
            ParamGroup::Handler => &self.handler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.quantum.validate()?;
        self.classical.validate()?;
        self.handler.validate()
    }
}

impl Default for GroupConfigs {
    fn default() -> Self {
        Self::uniform(AdamConfig::default())
    }
}

/// One Adam state per parameter tensor of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub configs: GroupConfigs,
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(model: &FusionModel, configs: GroupConfigs) -> Result<Self> {
        configs.validate()?;
        let states = model.params().iter().map(|(_, v)| AdamState::new(v.len())).collect();
        Ok(Self { configs, states })
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Applies one update. Frozen tensors are skipped; when `only` is set,
    /// other groups are left untouched.
    pub fn step(&mut self, model: &mut FusionModel, grads: &ModelGrads, only: Option<ParamGroup>) -> Result<()> {
        let params = model.params_mut();
        if params.len() != self.states.len() || grads.tensors.len() != self.states.len() {
            return Err(Error::DimensionMismatch {
                what: "optimizer parameter tensors",
                expected: self.states.len(),
                got: params.len().min(grads.tensors.len()),
            });
        }
        for (((info, slot), state), grad) in params.into_iter().zip(&mut self.states).zip(&grads.tensors) {
            if only.is_some_and(|g| g != info.group) {
                continue;
            }
            if let Some(values) = slot {
                state.step(values, grad, self.configs.get(info.group))?;
            }
        }
        Ok(())
    }
}
