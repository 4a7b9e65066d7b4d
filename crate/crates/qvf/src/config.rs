//! Declarative experiment configuration (one JSON document).

use std::path::{Path, PathBuf};

use qvf_core::data::{Split, SynthKind, SynthSpec};
use qvf_core::fusion::{BranchNorm, GroupConfigs, ModelConfig, Strategy};
use qvf_core::neural::{BackboneKind, BackboneSpec};
use qvf_core::quanv::{QuanvConfig, QuanvMode};
use qvf_core::rng::derive_seed;
use qvf_core::train::TrainOptions;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{read, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negatives: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// `{split}-images.idx` / `{split}-labels.idx` for train, val and test.
    Idx {
        dir: PathBuf,
        /// Built-in manifest name (`breastmnist`, `inbreast`, `bus-uclm`)
        /// or a path to a manifest JSON file.
        #[serde(default)]
        manifest: Option<String>,
    },
    Synthetic {
        kind: SynthKind,
        train: ClassCounts,
        val: ClassCounts,
        test: ClassCounts,
        #[serde(default = "default_side")]
        side: usize,
    },
}

fn default_side() -> usize {
    28
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub strategy: Strategy,
    /// Ignored by the quantum baseline.
    #[serde(default = "default_backbone")]
    pub backbone: BackboneKind,
    /// Ignored by the classical baseline.
    #[serde(default = "default_mode")]
    pub quantum_mode: QuanvMode,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default)]
    pub batch_norm: BranchNorm,
    /// Root of every random stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optim: GroupConfigs,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_patience")]
    pub patience: Option<usize>,
    /// Epochs for the standalone classical backbone that static fusion
    /// freezes; defaults to `epochs`.
    #[serde(default)]
    pub pretrain_epochs: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_backbone() -> BackboneKind {
    BackboneKind::Scnn
}
fn default_mode() -> QuanvMode {
    QuanvMode::Trainable
}
fn default_embed_dim() -> usize {
    128
}
fn default_epochs() -> usize {
    50
}
fn default_batch() -> usize {
    32
}
fn default_patience() -> Option<usize> {
    Some(10)
}

/// Independent streams split from the root seed by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub theta_fix: u64,
    pub init: u64,
    pub shuffle: u64,
    pub data: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Self {
            root,
            theta_fix: derive_seed(root, "theta_fix"),
            init: derive_seed(root, "init"),
            shuffle: derive_seed(root, "shuffle"),
            data: derive_seed(root, "data"),
        }
    }
}

impl ExperimentConfig {
    pub fn synthetic(kind: SynthKind, train: usize, val: usize, test: usize, strategy: Strategy) -> Self {
        let half = |n: usize| ClassCounts {
            negatives: n - n / 2,
            positives: n / 2,
        };
        Self {
            dataset: DatasetSource::Synthetic {
                kind,
                train: half(train),
                val: half(val),
                test: half(test),
                side: 28,
            },
            strategy,
            backbone: default_backbone(),
            quantum_mode: default_mode(),
            embed_dim: default_embed_dim(),
            batch_norm: BranchNorm::default(),
            seed: 0,
            optim: GroupConfigs::default(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            patience: default_patience(),
            pretrain_epochs: None,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reads a config file and applies `path=value` overrides, where `path`
    /// is dotted (`optim.handler.lr=0.01`) and `value` is JSON or a bare
    /// string.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_slice(&read(path)?).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: Self = serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_root(self.seed)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            shuffle_seed: self.seeds().shuffle,
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        match &self.dataset {
            DatasetSource::Idx { .. } => [1, 28, 28],
            DatasetSource::Synthetic { side, .. } => [1, *side, *side],
        }
    }

    fn backbone_spec(&self, embed_dim: usize) -> Result<BackboneSpec> {
        let [_, h, w] = self.input_shape();
        let spec = match self.backbone {
            BackboneKind::Scnn => BackboneSpec::scnn(embed_dim),
            BackboneKind::MiniResNet => BackboneSpec::mini_resnet(embed_dim),
            BackboneKind::Custom => {
                return Err(Error::Config("custom backbones are not available from the config file".into()))
            }
        };
        if (h, w) != (28, 28) {
            return Err(Error::Config(format!("built-in backbones expect 28x28 inputs, got {h}x{w}")));
        }
        Ok(spec)
    }

    /// Model configuration for `strategy` (which may differ from the
    /// configured one, e.g. for static-fusion pretraining).
    pub fn model_config(&self, strategy: Strategy) -> Result<ModelConfig> {
        let seeds = self.seeds();
        let config = ModelConfig {
            strategy,
            input_shape: self.input_shape(),
            embed_dim: self.embed_dim,
            quanv: strategy
                .uses_quantum()
                .then(|| QuanvConfig::standard(self.quantum_mode, seeds.theta_fix)),
            backbone: if strategy.uses_classical() {
                Some(self.backbone_spec(self.embed_dim)?)
            } else {
                None
            },
            batch_norm: if strategy == Strategy::Shf { BranchNorm::default() } else { self.batch_norm },
            init_seed: seeds.init,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        self.train_options().validate()?;
        if self.strategy == Strategy::Shf && (self.batch_norm.quantum || self.batch_norm.classical) {
            return Err(Error::Config("batch_norm cannot be used with static fusion".into()));
        }
        match &self.dataset {
            DatasetSource::Idx { dir, manifest } => {
                for split in [Split::Train, Split::Val, Split::Test] {
                    let (i, l) = crate::idx::split_paths(dir, split);
                    for p in [i, l] {
                        if !p.is_file() {
                            return Err(Error::Config(format!("dataset file {} not found", p.display())));
                        }
                    }
                }
                if let Some(m) = manifest {
                    if crate::manifest::SplitManifest::named(m).is_none() && !Path::new(m).is_file() {
                        return Err(Error::Config(format!("manifest {m:?} is neither built in nor a file")));
                    }
                }
            }
            DatasetSource::Synthetic { train, val, test, side, .. } => {
                if *side < 4 {
                    return Err(Error::Config("synthetic side must be >= 4".into()));
                }
                for (name, c) in [("train", train), ("val", val), ("test", test)] {
                    if c.negatives + c.positives == 0 {
                        return Err(Error::Config(format!("synthetic {name} split is empty")));
                    }
                }
            }
        }
        self.model_config(self.strategy)?;
        Ok(())
    }

    pub fn synth_spec(&self, split: Split) -> Option<SynthSpec> {
        let DatasetSource::Synthetic { kind, train, val, test, side } = &self.dataset else {
            return None;
        };
        let counts = match split {
            Split::Train => train,
            Split::Val => val,
            Split::Test => test,
        };
        Some(SynthSpec {
            kind: *kind,
            negatives: counts.negatives,
            positives: counts.positives,
            side: *side,
            seed: derive_seed(self.seeds().data, split.name()),
        })
    }
}

fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(Error::Config(format!("override {path:?}: {} is not an object", keys[..i].join("."))));
        };
        if i + 1 == keys.len() {
            map.insert((*key).to_string(), value);
            return Ok(());
        }
        node = map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config("empty override path".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_leaves() {
        let mut v: Value = serde_json::json!({"optim": {"handler": {"lr": 0.001}}, "epochs": 3});
        apply_override(&mut v, "optim.handler.lr=0.5").unwrap();
        apply_override(&mut v, "strategy=tshf").unwrap();
        apply_override(&mut v, "patience=null").unwrap();
        assert_eq!(v["optim"]["handler"]["lr"], 0.5);
        assert_eq!(v["strategy"], "tshf");
        assert!(v["patience"].is_null());
        assert!(apply_override(&mut v, "epochs.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        let s = Seeds::from_root(1);
        let all = [s.theta_fix, s.init, s.shuffle, s.data];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_eq!(s, Seeds::from_root(1));
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::synthetic(SynthKind::SeparableBlobs, 10, 4, 4, Strategy::Tshf);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        c.validate().unwrap();
    }
}
