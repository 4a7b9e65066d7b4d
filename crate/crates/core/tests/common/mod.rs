#![allow(dead_code)]

use qvf_core::fusion::{BranchNorm, FusionModel, ModelConfig, Strategy};
use qvf_core::neural::{BackboneSpec, LayerDesc};
use qvf_core::qsim::{AngleSource, CircuitSpec, Gate, GateKind};
use qvf_core::quanv::{QuanvConfig, QuanvMode};
use qvf_core::rng::SplitMix64;
use qvf_core::Tensor;

/// Random 4-qubit circuit: RY encoding layer, then a random mix of
/// parameterised, constant and entangling gates. Some parameter slots are
/// reused.
pub fn random_circuit(rng: &mut SplitMix64, params: usize, extra_gates: usize) -> CircuitSpec {
    let n = 4;
    let mut gates: Vec<Gate> = (0..n).map(|q| Gate::ry(q, AngleSource::Encoding { index: q })).collect();
    let kinds = [GateKind::Rx, GateKind::Ry, GateKind::Rz];
    for p in 0..params {
        gates.push(Gate::rotation(kinds[rng.below(3)], rng.below(n), AngleSource::Parameter { index: p }));
    }
    for _ in 0..extra_gates {
        match rng.below(3) {
            0 => {
                let c = rng.below(n);
                let t = (c + 1 + rng.below(n - 1)) % n;
                gates.push(Gate::cnot(c, t));
            }
            1 => gates.push(Gate::rotation(
                kinds[rng.below(3)],
                rng.below(n),
                AngleSource::Parameter { index: rng.below(params) },
            )),
            _ => gates.push(Gate::rotation(
                kinds[rng.below(3)],
                rng.below(n),
                AngleSource::Constant { value: rng.uniform(-3.0, 3.0) },
            )),
        }
    }
    CircuitSpec::new(n, gates, n, params).unwrap()
}

pub fn random_vec(rng: &mut SplitMix64, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.uniform(lo, hi)).collect()
}

pub fn random_image(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::new(&[c, h, w], random_vec(rng, c * h * w, 0.0, 1.0)).unwrap()
}

/// Reduced fusion model on 4×4 images, embedding width 8.
pub fn tiny_model(strategy: Strategy, mode: QuanvMode, batch_norm: BranchNorm, seed: u64) -> FusionModel {
    let d = 8;
    let backbone = BackboneSpec::custom(
        [1, 4, 4],
        vec![
            LayerDesc::Conv {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerDesc::Relu,
            LayerDesc::MaxPool { size: 2 },
            LayerDesc::Flatten,
            LayerDesc::Linear { inputs: 8, outputs: d },
        ],
        d,
    )
    .unwrap();
    FusionModel::new(ModelConfig {
        strategy,
        input_shape: [1, 4, 4],
        embed_dim: d,
        quanv: strategy.uses_quantum().then(|| QuanvConfig::standard(mode, seed ^ 0x55)),
        backbone: strategy.uses_classical().then_some(backbone),
        batch_norm,
        init_seed: seed,
    })
    .unwrap()
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
