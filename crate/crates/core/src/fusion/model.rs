use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{EmbeddingPair, Strategy};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::neural::{
    cross_entropy, softmax2, Backbone, BackboneCache, BackboneSpec, BatchNorm1d, BatchNormCache,
    Linear,
};
use crate::quanv::{self, QuanvConfig, QuanvState};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Optional batch normalisation of each branch embedding before fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchNorm {
    pub quantum: bool,
    pub classical: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub strategy: Strategy,
    pub input_shape: [usize; 3],
    /// Branch embedding width `d`.
    pub embed_dim: usize,
    pub quanv: Option<QuanvConfig>,
    pub backbone: Option<BackboneSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub batch_norm: BranchNorm,
    /// Seeds the projection, backbone and handler weights.
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.strategy;
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be >= 1".into()));
        }
        if s.uses_quantum() {
            let q = self
                .quanv
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{s} needs a quanv config")))?;
            q.validate()?;
            let [c, h, w] = self.input_shape;
            if c != q.in_channels {
                return Err(Error::InvalidConfig(format!(
                    "quanv expects {} channels, input has {c}",
                    q.in_channels
                )));
            }
            q.output_shape(h, w)?;
        }
        if s.uses_classical() {
            let b = self
                .backbone
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{s} needs a backbone")))?;
            b.validate()?;
            if b.input_shape != self.input_shape {
                return Err(Error::InvalidConfig(format!(
                    "backbone input {:?} differs from model input {:?}",
                    b.input_shape, self.input_shape
                )));
            }
            if b.embed_dim != self.embed_dim {
                return Err(Error::InvalidConfig(format!(
                    "backbone embeds to {}, model width is {}",
                    b.embed_dim, self.embed_dim
                )));
            }
        }
        if s == Strategy::Shf && (self.batch_norm.quantum || self.batch_norm.classical) {
            return Err(Error::InvalidConfig(
                "batch norm is not available with static fusion (branches are frozen)".into(),
            ));
        }
        if s == Strategy::BaselineQuantum && self.batch_norm.classical
            || s == Strategy::BaselineClassical && self.batch_norm.quantum
        {
            return Err(Error::InvalidConfig(format!("{s} has no such branch to normalise")));
        }
        Ok(())
    }

    /// Width of the quanvolution output flattened.
    fn quanv_features(&self) -> usize {
        let q = self.quanv.as_ref().expect("validated");
        let [_, h, w] = self.input_shape;
        q.output_shape(h, w).expect("validated").iter().product()
    }
}

/// Quanvolution, flattened, then an optional linear projection to `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumBranch {
    pub config: QuanvConfig,
    pub state: QuanvState,
    pub projection: Option<Linear>,
}

impl QuantumBranch {
    pub fn output_dim(&self, features: usize) -> usize {
        self.projection.as_ref().map_or(features, Linear::outputs)
    }

    /// Returns `(h_q, flattened quanvolution output)`.
    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let features = quanv::quanv_forward(image, &self.config, &self.state)?.into_data();
        let h = match &self.projection {
            Some(p) => p.forward(&features)?,
            None => features.clone(),
        };
        Ok((h, features))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ParamGroup {
    /// Circuit angles and the quantum projection.
    Quantum,
    /// Backbone weights.
    Classical,
    /// Classification handler and `γ`.
    Handler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    /// `false` only for a fixed-mode circuit's `θ_fix`.
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub classical: usize,
    pub quantum: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.classical + self.quantum
    }
}

/// One gradient vector per parameter tensor, in [`FusionModel::params`]
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl ModelGrads {
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m, v| if v.abs() > m { v.abs() } else { m })
    }
}

#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: ModelGrads,
    pub(crate) bn_quantum: Option<BatchNormCache>,
    pub(crate) bn_classical: Option<BatchNormCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    config: ModelConfig,
    pub quantum: Option<QuantumBranch>,
    pub classical: Option<Backbone>,
    pub bn_quantum: Option<BatchNorm1d>,
    pub bn_classical: Option<BatchNorm1d>,
    /// Present only under temperature-scaled fusion; starts at 1.
    pub gamma: Option<f64>,
    pub handler: Linear,
}

struct SampleForward {
    h_q: Option<Vec<f64>>,
    q_features: Option<Vec<f64>>,
    h_c: Option<Vec<f64>>,
    c_cache: Option<BackboneCache>,
}

struct BatchForward {
    samples: Vec<SampleForward>,
    /// Post-normalisation embeddings, per sample.
    h_q: Vec<Option<Vec<f64>>>,
    h_c: Vec<Option<Vec<f64>>>,
    bn_q: Option<BatchNormCache>,
    bn_c: Option<BatchNormCache>,
}

impl FusionModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let s = config.strategy;
        let d = config.embed_dim;
        let mut rng = SplitMix64::new(config.init_seed);
        let quantum = if s.uses_quantum() {
            let qc = config.quanv.clone().expect("validated");
            let features = config.quanv_features();
            let state = QuanvState::init(&qc);
            Some(QuantumBranch {
                config: qc,
                state,
                projection: s.is_fusion().then(|| Linear::kaiming(features, d, &mut rng)),
            })
        } else {
            None
        };
        let classical = if s.uses_classical() {
            Some(Backbone::init(config.backbone.clone().expect("validated"), &mut rng)?)
        } else {
            None
        };
        let handler_in = match s {
            Strategy::BaselineQuantum => config.quanv_features(),
            Strategy::BaselineClassical => d,
            _ => 2 * d,
        };
        let handler = Linear::kaiming(handler_in, 2, &mut rng);
        Ok(Self {
            bn_quantum: config.batch_norm.quantum.then(|| BatchNorm1d::new(d_for_bn(&config, true))),
            bn_classical: config.batch_norm.classical.then(|| BatchNorm1d::new(d)),
            gamma: (s == Strategy::Tshf).then_some(1.0),
            config,
            quantum,
            classical,
            handler,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.config.strategy
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Replaces the classical branch (for instance with a backbone trained
    /// standalone before static fusion).
    pub fn set_classical(&mut self, backbone: Backbone) -> Result<()> {
        if self.classical.is_none() || backbone.spec() != self.classical.as_ref().unwrap().spec() {
            return Err(Error::InvalidConfig("backbone does not match this model".into()));
        }
        self.classical = Some(backbone);
        Ok(())
    }

    /// Classical and quantum parameter counts. A fixed circuit contributes
    /// nothing; projections, normalisation, the handler and `γ` count as
    /// classical.
    pub fn count_params(&self) -> ParamCount {
        let mut count = ParamCount {
            classical: 0,
            quantum: 0,
        };
        for (info, values) in self.params() {
            if info.name == "quantum.theta" {
                if info.trainable {
                    count.quantum += values.len();
                }
            } else {
                count.classical += values.len();
            }
        }
        count
    }

    fn param_entries(&self) -> Vec<(ParamInfo, &[f64], Vec<usize>)> {
        let mut out: Vec<(ParamInfo, &[f64], Vec<usize>)> = Vec::new();
        if let Some(q) = &self.quantum {
            let theta = q.state.theta();
            out.push((
                info("quantum.theta", ParamGroup::Quantum, &[theta.len()], !q.state.frozen()),
                theta,
                vec![theta.len()],
            ));
            if let Some(p) = &q.projection {
                out.push((info("quantum.projection.weight", ParamGroup::Quantum, p.weight.shape(), true), p.weight.data(), p.weight.shape().to_vec()));
                out.push((info("quantum.projection.bias", ParamGroup::Quantum, p.bias.shape(), true), p.bias.data(), p.bias.shape().to_vec()));
            }
        }
        if let Some(b) = &self.classical {
            for (name, t) in b.params() {
                out.push((
                    info(&format!("classical.{name}"), ParamGroup::Classical, t.shape(), true),
                    t.data(),
                    t.shape().to_vec(),
                ));
            }
        }
        for (prefix, bn, group) in [
            ("bn_quantum", &self.bn_quantum, ParamGroup::Quantum),
            ("bn_classical", &self.bn_classical, ParamGroup::Classical),
        ] {
            if let Some(bn) = bn {
                out.push((info(&format!("{prefix}.weight"), group, bn.weight.shape(), true), bn.weight.data(), bn.weight.shape().to_vec()));
                out.push((info(&format!("{prefix}.bias"), group, bn.bias.shape(), true), bn.bias.data(), bn.bias.shape().to_vec()));
            }
        }
        let h = &self.handler;
        out.push((info("handler.weight", ParamGroup::Handler, h.weight.shape(), true), h.weight.data(), h.weight.shape().to_vec()));
        out.push((info("handler.bias", ParamGroup::Handler, h.bias.shape(), true), h.bias.data(), h.bias.shape().to_vec()));
        if let Some(g) = &self.gamma {
            out.push((info("gamma", ParamGroup::Handler, &[1], true), core::slice::from_ref(g), vec![1]));
        }
        out
    }

    /// Every parameter tensor (including a frozen `θ_fix`) in a fixed order:
    /// circuit angles, quantum projection, backbone, branch normalisation,
    /// handler, `γ`.
    pub fn params(&self) -> Vec<(ParamInfo, &[f64])> {
        self.param_entries().into_iter().map(|(i, d, _)| (i, d)).collect()
    }

    /// Mutable views in [`FusionModel::params`] order. Frozen circuit angles
    /// are yielded as `None`.
    pub fn params_mut(&mut self) -> Vec<(ParamInfo, Option<&mut [f64]>)> {
        let infos: Vec<ParamInfo> = self.param_entries().into_iter().map(|(i, _, _)| i).collect();
        let mut slots: Vec<Option<&mut [f64]>> = Vec::with_capacity(infos.len());
        if let Some(q) = self.quantum.as_mut() {
            slots.push(q.state.theta_mut());
            if let Some(p) = q.projection.as_mut() {
                slots.push(Some(p.weight.data_mut()));
                slots.push(Some(p.bias.data_mut()));
            }
        }
        if let Some(b) = self.classical.as_mut() {
            for (_, t) in b.params_mut() {
                slots.push(Some(t.data_mut()));
            }
        }
        for bn in [self.bn_quantum.as_mut(), self.bn_classical.as_mut()].into_iter().flatten() {
            slots.push(Some(bn.weight.data_mut()));
            slots.push(Some(bn.bias.data_mut()));
        }
        slots.push(Some(self.handler.weight.data_mut()));
        slots.push(Some(self.handler.bias.data_mut()));
        if let Some(g) = self.gamma.as_mut() {
            slots.push(Some(core::slice::from_mut(g)));
        }
        debug_assert_eq!(infos.len(), slots.len());
        infos.into_iter().zip(slots).collect()
    }

    /// Parameters plus normalisation running statistics, as
    /// `(name, shape, values)`; the checkpoint payload.
    pub fn state_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out: Vec<_> = self
            .param_entries()
            .into_iter()
            .map(|(i, d, s)| (i.name, s, d.to_vec()))
            .collect();
        for (prefix, bn) in [("bn_quantum", &self.bn_quantum), ("bn_classical", &self.bn_classical)] {
            if let Some(bn) = bn {
                out.push((format!("{prefix}.running_mean"), bn.running_mean.shape().to_vec(), bn.running_mean.data().to_vec()));
                out.push((format!("{prefix}.running_var"), bn.running_var.shape().to_vec(), bn.running_var.data().to_vec()));
            }
        }
        out
    }

    /// Overwrites one tensor listed by [`FusionModel::state_tensors`].
    pub fn load_state_tensor(&mut self, name: &str, shape: &[usize], values: &[f64]) -> Result<()> {
        let expected = self
            .state_tensors()
            .into_iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("model has no tensor named {name}")))?;
        if expected.1 != shape || values.len() != expected.2.len() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: stored shape {shape:?}, model expects {:?}",
                expected.1
            )));
        }
        if name == "quantum.theta" {
            let q = self.quantum.as_mut().expect("listed");
            q.state = QuanvState::from_theta(&q.config, values.to_vec())?;
            return Ok(());
        }
        if let Some(rest) = name.strip_suffix(".running_mean").or_else(|| name.strip_suffix(".running_var")) {
            let bn = match rest {
                "bn_quantum" => self.bn_quantum.as_mut(),
                _ => self.bn_classical.as_mut(),
            }
            .expect("listed");
            let t = if name.ends_with("running_mean") {
                &mut bn.running_mean
            } else {
                &mut bn.running_var
            };
            t.data_mut().copy_from_slice(values);
            return Ok(());
        }
        for (info, slot) in self.params_mut() {
            if info.name == name {
                slot.expect("trainable").copy_from_slice(values);
                return Ok(());
            }
        }
        unreachable!("tensor {name} listed but not found")
    }

    fn sample_forward(&self, image: &Tensor) -> Result<SampleForward> {
        let (h_q, q_features) = match &self.quantum {
            Some(q) => {
                let (h, f) = q.forward(image)?;
                (Some(h), Some(f))
            }
            None => (None, None),
        };
        let (h_c, c_cache) = match &self.classical {
            Some(b) => {
                let (h, c) = b.forward(image)?;
                (Some(h), Some(c))
            }
            None => (None, None),
        };
        Ok(SampleForward {
            h_q,
            q_features,
            h_c,
            c_cache,
        })
    }

    fn fuse(&self, h_q: Option<&[f64]>, h_c: Option<&[f64]>) -> Vec<f64> {
        let gamma = self.gamma.unwrap_or(1.0);
        let mut out = Vec::new();
        if let Some(q) = h_q {
            out.extend(q.iter().map(|v| gamma * v));
        }
        if let Some(c) = h_c {
            out.extend_from_slice(c);
        }
        out
    }

    /// Branch embeddings (after normalisation in evaluation mode).
    pub fn embed(&self, image: &Tensor) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>)> {
        let f = self.sample_forward(image)?;
        let h_q = match (&self.bn_quantum, f.h_q) {
            (Some(bn), Some(h)) => Some(bn.forward_eval(&h)?),
            (_, h) => h,
        };
        let h_c = match (&self.bn_classical, f.h_c) {
            (Some(bn), Some(h)) => Some(bn.forward_eval(&h)?),
            (_, h) => h,
        };
        Ok((h_q, h_c))
    }

    /// Handler logits for already-computed branch embeddings.
    pub fn logits_from_embeddings(&self, h_q: Option<&[f64]>, h_c: Option<&[f64]>) -> Result<[f64; 2]> {
        let z = self.handler.forward(&self.fuse(h_q, h_c))?;
        Ok([z[0], z[1]])
    }

    pub fn logits(&self, image: &Tensor) -> Result<[f64; 2]> {
        let (q, c) = self.embed(image)?;
        self.logits_from_embeddings(q.as_deref(), c.as_deref())
    }

    /// Positive-class probability.
    pub fn predict_proba(&self, image: &Tensor) -> Result<f64> {
        Ok(softmax2(self.logits(image)?)[1])
    }

    /// Cached-pair entry point used by static fusion.
    pub fn predict_proba_pair(&self, pair: &EmbeddingPair) -> Result<f64> {
        Ok(softmax2(self.logits_from_embeddings(Some(&pair.h_q), Some(&pair.h_c))?)[1])
    }

    fn batch_forward<E: Executor>(&self, images: &[Tensor], exec: &E) -> Result<BatchForward> {
        let samples = exec
            .map(images.len(), |i| self.sample_forward(&images[i]))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let normalise = |bn: &Option<BatchNorm1d>, hs: Vec<Option<Vec<f64>>>| -> Result<(Vec<Option<Vec<f64>>>, Option<BatchNormCache>)> {
            match bn {
                Some(bn) => {
                    let batch: Vec<Vec<f64>> = hs.into_iter().map(|h| h.expect("branch present")).collect();
                    let (out, cache) = bn.forward_train(&batch)?;
                    Ok((out.into_iter().map(Some).collect(), Some(cache)))
                }
                None => Ok((hs, None)),
            }
        };
        let (h_q, bn_q) = normalise(&self.bn_quantum, samples.iter().map(|s| s.h_q.clone()).collect())?;
        let (h_c, bn_c) = normalise(&self.bn_classical, samples.iter().map(|s| s.h_c.clone()).collect())?;
        Ok(BatchForward {
            samples,
            h_q,
            h_c,
            bn_q,
            bn_c,
        })
    }

    /// Mean cross-entropy over the batch with training-mode normalisation
    /// (the quantity [`FusionModel::batch_gradients`] differentiates).
    pub fn batch_loss<E: Executor>(&self, images: &[Tensor], labels: &[u8], exec: &E) -> Result<f64> {
        check_batch(images, labels)?;
        let fwd = self.batch_forward(images, exec)?;
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let logits = self.logits_from_embeddings(fwd.h_q[i].as_deref(), fwd.h_c[i].as_deref())?;
            total += cross_entropy(logits, label)?.0;
        }
        Ok(total / labels.len() as f64)
    }

    /// Mean loss over the batch and its gradient with respect to every
    /// parameter. Under static fusion only the handler receives gradient;
    /// a fixed circuit always receives exact zeros.
    pub fn batch_gradients<E: Executor>(&self, images: &[Tensor], labels: &[u8], exec: &E) -> Result<BatchGradients> {
        check_batch(images, labels)?;
        let fwd = self.batch_forward(images, exec)?;
        let n = labels.len() as f64;
        let d_q = fwd.h_q.first().and_then(|h| h.as_ref()).map_or(0, Vec::len);
        let gamma = self.gamma.unwrap_or(1.0);

        let mut loss = 0.0;
        let mut g_handler_w = vec![0.0; self.handler.weight.len()];
        let mut g_handler_b = vec![0.0; 2];
        let mut g_gamma = 0.0;
        let mut g_hq: Vec<Vec<f64>> = Vec::with_capacity(labels.len());
        let mut g_hc: Vec<Vec<f64>> = Vec::with_capacity(labels.len());
        for (i, &label) in labels.iter().enumerate() {
            let fused = self.fuse(fwd.h_q[i].as_deref(), fwd.h_c[i].as_deref());
            let z = self.handler.forward(&fused)?;
            let (l, gl) = cross_entropy([z[0], z[1]], label)?;
            loss += l;
            let gl = [gl[0] / n, gl[1] / n];
            let (g_fused, hg) = self.handler.backward(&fused, &gl)?;
            add(&mut g_handler_w, &hg.weight);
            add(&mut g_handler_b, &hg.bias);
            let (uq, uc) = g_fused.split_at(d_q);
            if let Some(hq) = &fwd.h_q[i] {
                if self.gamma.is_some() {
                    g_gamma += hq.iter().zip(uq).map(|(h, u)| h * u).sum::<f64>();
                }
            }
            g_hq.push(uq.iter().map(|u| gamma * u).collect());
            g_hc.push(uc.to_vec());
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }

        let mut bn_q_grads = None;
        if let (Some(bn), Some(cache)) = (&self.bn_quantum, &fwd.bn_q) {
            let (gx, gw, gb) = bn.backward(cache, &g_hq)?;
            g_hq = gx;
            bn_q_grads = Some((gw, gb));
        }
        let mut bn_c_grads = None;
        if let (Some(bn), Some(cache)) = (&self.bn_classical, &fwd.bn_c) {
            let (gx, gw, gb) = bn.backward(cache, &g_hc)?;
            g_hc = gx;
            bn_c_grads = Some((gw, gb));
        }

        let train_branches = self.strategy() != Strategy::Shf;
        let per_sample = exec.map(labels.len(), |i| -> Result<(Option<QuantumSampleGrads>, Option<Vec<Vec<f64>>>)> {
            if !train_branches {
                return Ok((None, None));
            }
            let s = &fwd.samples[i];
            let q = match (&self.quantum, &s.q_features) {
                (Some(q), Some(features)) => Some(quantum_backward(q, &images[i], features, &g_hq[i])?),
                _ => None,
            };
            let c = match (&self.classical, &s.c_cache) {
                (Some(b), Some(cache)) => Some(b.backward(cache, &g_hc[i])?.1),
                _ => None,
            };
            Ok((q, c))
        });

        // Accumulate in parameter order, samples in index order.
        let names: Vec<String> = self.params().into_iter().map(|(i, _)| i.name).collect();
        let slot = |name: &str| names.iter().position(|n| n == name).expect("known parameter");
        let mut tensors: Vec<Vec<f64>> = self.params().iter().map(|(_, v)| vec![0.0; v.len()]).collect();
        let first_classical = names.iter().position(|n| n.starts_with("classical."));
        for result in per_sample {
            let (q, c) = result?;
            if let Some(q) = q {
                add(&mut tensors[slot("quantum.theta")], &q.theta);
                if let Some((w, b)) = q.projection {
                    add(&mut tensors[slot("quantum.projection.weight")], &w);
                    add(&mut tensors[slot("quantum.projection.bias")], &b);
                }
            }
            if let (Some(c), Some(k)) = (c, first_classical) {
                for (j, g) in c.iter().enumerate() {
                    add(&mut tensors[k + j], g);
                }
            }
        }
        for (prefix, grads) in [("bn_quantum", bn_q_grads), ("bn_classical", bn_c_grads)] {
            if let Some((gw, gb)) = grads {
                tensors[slot(&format!("{prefix}.weight"))] = gw;
                tensors[slot(&format!("{prefix}.bias"))] = gb;
            }
        }
        tensors[slot("handler.weight")] = g_handler_w;
        tensors[slot("handler.bias")] = g_handler_b;
        if self.gamma.is_some() {
            tensors[slot("gamma")] = vec![g_gamma];
        }
        Ok(BatchGradients {
            loss,
            grads: ModelGrads { tensors },
            bn_quantum: fwd.bn_q,
            bn_classical: fwd.bn_c,
        })
    }

    pub(crate) fn update_running_stats(&mut self, batch: &BatchGradients) {
        if let (Some(bn), Some(c)) = (self.bn_quantum.as_mut(), &batch.bn_quantum) {
            bn.update_running(c);
        }
        if let (Some(bn), Some(c)) = (self.bn_classical.as_mut(), &batch.bn_classical) {
            bn.update_running(c);
        }
    }
}

fn d_for_bn(config: &ModelConfig, quantum: bool) -> usize {
    if quantum && config.strategy == Strategy::BaselineQuantum {
        config.quanv_features()
    } else {
        config.embed_dim
    }
}

fn info(name: &str, group: ParamGroup, shape: &[usize], trainable: bool) -> ParamInfo {
    ParamInfo {
        name: name.into(),
        group,
        shape: shape.to_vec(),
        trainable,
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn check_batch(images: &[Tensor], labels: &[u8]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    if images.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "batch labels",
            expected: images.len(),
            got: labels.len(),
        });
    }
    Ok(())
}

struct QuantumSampleGrads {
    theta: Vec<f64>,
    projection: Option<(Vec<f64>, Vec<f64>)>,
}

fn quantum_backward(q: &QuantumBranch, image: &Tensor, features: &[f64], grad_h: &[f64]) -> Result<QuantumSampleGrads> {
    let (grad_features, projection) = match &q.projection {
        Some(p) => {
            let (gx, g) = p.backward(features, grad_h)?;
            (gx, Some((g.weight, g.bias)))
        }
        None => (grad_h.to_vec(), None),
    };
    let (_, h, w) = image.chw()?;
    let shape = q.config.output_shape(h, w)?;
    let upstream = Tensor::new(&shape, grad_features)?;
    let theta = if q.state.frozen() {
        vec![0.0; q.state.theta().len()]
    } else {
        quanv::quanv_theta_grad(image, &q.config, &q.state, &upstream)?
    };
    Ok(QuantumSampleGrads { theta, projection })
}
