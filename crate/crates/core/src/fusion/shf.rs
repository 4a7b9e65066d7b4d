use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::model::{FusionModel, ModelGrads, ParamGroup};
use super::optim::Optimizer;
use super::{EmbeddingPair, Strategy};
use crate::data::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::metrics::MetricsReport;
use crate::neural::cross_entropy;
use crate::train::{self, epoch_loop, FitOutcome, TrainOptions, Trainee, THRESHOLD};

/// Where a cache came from. Hashes are filled in by the caller (the core
/// crate does no hashing).
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub root_seed: Option<u64>,
    pub theta_seed: u64,
    pub init_seed: u64,
    pub theta_fix: Vec<f64>,
    pub checkpoint_hash: Option<String>,
    pub config_hash: Option<String>,
}

impl Provenance {
    /// Seeds and angles of `model`, hashes unset.
    pub fn of(model: &FusionModel) -> Self {
        let q = model.quantum.as_ref();
        Self {
            root_seed: None,
            theta_seed: q.map_or(0, |q| q.config.seed),
            init_seed: model.config().init_seed,
            theta_fix: q.map_or_else(Vec::new, |q| q.state.theta().to_vec()),
            checkpoint_hash: None,
            config_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub label: u8,
    pub pair: EmbeddingPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub split: Split,
    pub d: usize,
    pub records: Vec<CacheRecord>,
    pub provenance: Provenance,
}

impl FeatureCache {
    pub fn new(split: Split, d: usize, records: Vec<CacheRecord>, provenance: Provenance) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.pair.h_q.len() != d || r.pair.h_c.len() != d {
                return Err(Error::ShapeMismatch(format!(
                    "record {i} has widths ({}, {}), cache width is {d}",
                    r.pair.h_q.len(),
                    r.pair.h_c.len()
                )));
            }
            if r.label > 1 {
                return Err(Error::InvalidState(format!("record {i} has label {}", r.label)));
            }
        }
        Ok(Self {
            split,
            d,
            records,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Errors unless the cache was produced by an extractor matching
    /// `model` (width, seeds, circuit angles).
    pub fn check_against(&self, model: &FusionModel) -> Result<()> {
        let expect = Provenance::of(model);
        let p = &self.provenance;
        let mismatch = |what: &str| Err(Error::InvalidState(format!("{} cache: {what} does not match the model", self.split)));
        if self.d != model.embed_dim() {
            return mismatch("embedding width");
        }
        if p.theta_seed != expect.theta_seed {
            return mismatch("theta seed");
        }
        if p.init_seed != expect.init_seed {
            return mismatch("init seed");
        }
        if p.theta_fix != expect.theta_fix {
            return mismatch("theta_fix");
        }
        Ok(())
    }
}

/// Runs both frozen extractors over a split. Output order follows the
/// dataset regardless of the executor.
pub fn extract_features<E: Executor>(
    model: &FusionModel,
    dataset: &LabeledDataset,
    provenance: Provenance,
    exec: &E,
) -> Result<FeatureCache> {
    if !model.strategy().is_fusion() {
        return Err(Error::InvalidConfig(format!(
            "feature extraction needs both branches, strategy is {}",
            model.strategy()
        )));
    }
    let pairs = exec.map(dataset.len(), |i| -> Result<EmbeddingPair> {
        let (q, c) = model.embed(&dataset.image(i))?;
        EmbeddingPair::new(q.expect("fusion model"), c.expect("fusion model"))
    });
    let records = pairs
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(CacheRecord {
                label: dataset.label(i),
                pair: p?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureCache::new(dataset.split(), model.embed_dim(), records, provenance)
}

/// One handler-only Adam step on cached pairs. Returns the mean loss.
pub fn shf_step(model: &mut FusionModel, opt: &mut Optimizer, records: &[&CacheRecord]) -> Result<f64> {
    if model.strategy() != Strategy::Shf {
        return Err(Error::InvalidConfig(format!("static step called on a {} model", model.strategy())));
    }
    if records.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let n = records.len() as f64;
    let mut gw = vec![0.0; model.handler.weight.len()];
    let mut gb = vec![0.0; 2];
    let mut loss = 0.0;
    for r in records {
        let x = super::concat_fuse(&r.pair)?;
        let z = model.handler.forward(&x)?;
        let (l, g) = cross_entropy([z[0], z[1]], r.label)?;
        loss += l;
        let (_, hg) = model.handler.backward(&x, &[g[0] / n, g[1] / n])?;
        for (a, b) in gw.iter_mut().zip(&hg.weight) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(&hg.bias) {
            *a += b;
        }
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let mut tensors: Vec<Vec<f64>> = Vec::new();
    for (info, values) in model.params() {
        tensors.push(match info.name.as_str() {
            "handler.weight" => core::mem::take(&mut gw),
            "handler.bias" => core::mem::take(&mut gb),
            _ => vec![0.0; values.len()],
        });
    }
    opt.step(model, &ModelGrads { tensors }, Some(ParamGroup::Handler))?;
    Ok(loss)
}

pub struct ShfCaches<'a> {
    pub train: &'a FeatureCache,
    pub val: &'a FeatureCache,
    pub test: &'a FeatureCache,
}

#[derive(Debug, Clone)]
pub struct ShfOutcome {
    pub fit: FitOutcome,
    /// Final-model reports on train, validation and test.
    pub reports: [MetricsReport; 3],
}

struct CacheTrainee<'a> {
    model: &'a mut FusionModel,
    opt: &'a mut Optimizer,
    train: &'a FeatureCache,
    val: &'a FeatureCache,
}

impl Trainee for CacheTrainee<'_> {
    fn model(&self) -> &FusionModel {
        self.model
    }

    fn step(&mut self, indices: &[usize]) -> Result<f64> {
        let batch: Vec<&CacheRecord> = indices.iter().map(|&i| &self.train.records[i]).collect();
        shf_step(self.model, self.opt, &batch)
    }

    fn initial_loss(&self) -> Result<f64> {
        let mut total = 0.0;
        for r in &self.train.records {
            let z = self.model.logits_from_embeddings(Some(&r.pair.h_q), Some(&r.pair.h_c))?;
            total += cross_entropy(z, r.label)?.0;
        }
        Ok(total / self.train.len() as f64)
    }

    fn validation(&self) -> Result<(f64, f64)> {
        train::accuracy_f1(&self.val.labels(), &scores(self.model, self.val)?)
    }
}

fn scores(model: &FusionModel, cache: &FeatureCache) -> Result<Vec<f64>> {
    cache.records.iter().map(|r| model.predict_proba_pair(&r.pair)).collect()
}

/// Static fusion: trains only the handler on cached embeddings and reports
/// metrics for all three splits. Branch parameters are never written.
pub fn shf_run(
    model: &mut FusionModel,
    opt: &mut Optimizer,
    caches: ShfCaches<'_>,
    options: &TrainOptions,
    seed: Option<u64>,
) -> Result<ShfOutcome> {
    for c in [caches.train, caches.val, caches.test] {
        c.check_against(model)?;
    }
    let expected = [Split::Train, Split::Val, Split::Test];
    for (c, s) in [caches.train, caches.val, caches.test].into_iter().zip(expected) {
        if c.split != s {
            return Err(Error::InvalidState(format!("expected a {s} cache, got {}", c.split)));
        }
    }
    let n = caches.train.len();
    let mut t = CacheTrainee {
        model,
        opt,
        train: caches.train,
        val: caches.val,
    };
    let fit = epoch_loop(&mut t, n, options)?;
    let report = |c: &FeatureCache| -> Result<MetricsReport> {
        MetricsReport::from_scores(c.split.name(), seed, &c.labels(), &scores(model, c)?, THRESHOLD)
    };
    let reports = [report(caches.train)?, report(caches.val)?, report(caches.test)?];
    Ok(ShfOutcome { fit, reports })
}
