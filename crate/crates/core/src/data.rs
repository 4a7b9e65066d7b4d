//! Labelled image sets and the synthetic generators used for desk-scale
//! experiments.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grayscale images in `[0, 1]` with binary labels (1 = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<u8>,
    split: Split,
}

impl LabeledDataset {
    /// `images` is `(count, 1, height, width)`.
    pub fn new(images: Tensor, labels: Vec<u8>, split: Split) -> Result<Self> {
        let count = match *images.shape() {
            [b, 1, _, _] => b,
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "dataset images must be (count, 1, h, w), got {:?}",
                    images.shape()
                )))
            }
        };
        if count != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: count,
                got: labels.len(),
            });
        }
        if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!("pixel {v} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidConfig(format!("label {l} not in {{0, 1}}")));
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    /// Image `index` as `(1, h, w)`.
    pub fn image(&self, index: usize) -> Tensor {
        self.images.batch_item(index).expect("index in range")
    }

    /// `(height, width)` of every image.
    pub fn image_hw(&self) -> (usize, usize) {
        (self.images.shape()[2], self.images.shape()[3])
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SynthKind {
    /// A bright Gaussian blob, upper-left for negatives, lower-right for
    /// positives, on faint noise.
    SeparableBlobs,
    /// A ring whose angular texture oscillates 3 times (negatives) or 8
    /// times (positives) around the circumference.
    TexturedRings,
    /// Background noise plus two marker squares, each independently lit;
    /// the label is their XOR. No single window carries label information,
    /// so any model additive over non-overlapping windows (a quanvolution
    /// followed by a linear map) sees only noise, while a CNN can learn it.
    NoiseVsSignal,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::SeparableBlobs => "separable_blobs",
            SynthKind::TexturedRings => "textured_rings",
            SynthKind::NoiseVsSignal => "noise_vs_signal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            SynthKind::SeparableBlobs,
            SynthKind::TexturedRings,
            SynthKind::NoiseVsSignal,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub negatives: usize,
    pub positives: usize,
    pub side: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// `count` images split evenly (the odd one out is negative), 28×28.
    pub fn balanced(kind: SynthKind, count: usize, seed: u64) -> Self {
        Self {
            kind,
            negatives: count - count / 2,
            positives: count / 2,
            side: 28,
            seed,
        }
    }
}

/// Deterministic in `spec`; labels are shuffled so classes interleave.
pub fn synth_dataset(spec: &SynthSpec, split: Split) -> Result<LabeledDataset> {
    if spec.side < 8 {
        return Err(Error::InvalidConfig(format!(
            "synthetic images need side >= 8, got {}",
            spec.side
        )));
    }
    let count = spec.negatives + spec.positives;
    let mut rng = SplitMix64::new(spec.seed);
    let mut labels = vec![0u8; spec.negatives];
    labels.extend(core::iter::repeat_n(1u8, spec.positives));
    rng.shuffle(&mut labels);
    let s = spec.side;
    let mut data = Vec::with_capacity(count * s * s);
    for &label in &labels {
        let img = match spec.kind {
            SynthKind::SeparableBlobs => blob_image(s, label, &mut rng),
            SynthKind::TexturedRings => ring_image(s, label, &mut rng),
            SynthKind::NoiseVsSignal => xor_image(s, label, &mut rng),
        };
        data.extend(img.into_iter().map(|v| v.clamp(0.0, 1.0)));
    }
    LabeledDataset::new(Tensor::new(&[count, 1, s, s], data)?, labels, split)
}

fn noise(s: usize, amplitude: f64, rng: &mut SplitMix64) -> Vec<f64> {
    (0..s * s).map(|_| amplitude * rng.next_f64()).collect()
}

fn blob_image(s: usize, label: u8, rng: &mut SplitMix64) -> Vec<f64> {
    let sf = s as f64;
    let base = if label == 1 { 0.75 * sf } else { 0.25 * sf };
    let jitter = sf / 14.0;
    let cy = base + rng.uniform(-jitter, jitter);
    let cx = base + rng.uniform(-jitter, jitter);
    let sigma = sf / 7.0;
    let mut img = noise(s, 0.15, rng);
    for y in 0..s {
        for x in 0..s {
            let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let d2 = dy * dy + dx * dx;
            img[y * s + x] += 0.8 * math::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
    img
}

fn ring_image(s: usize, label: u8, rng: &mut SplitMix64) -> Vec<f64> {
    let sf = s as f64;
    let freq = if label == 1 { 8.0 } else { 3.0 };
    let cy = sf / 2.0 + rng.uniform(-1.0, 1.0);
    let cx = sf / 2.0 + rng.uniform(-1.0, 1.0);
    let radius = rng.uniform(sf / 4.0, sf / 3.0);
    let width = sf / 10.0;
    let phase = rng.angle();
    let mut img = noise(s, 0.1, rng);
    for y in 0..s {
        for x in 0..s {
            let dy = y as f64 + 0.5 - cy;
            let dx = x as f64 + 0.5 - cx;
            let r = math::sqrt(dy * dy + dx * dx);
            let t = (r - radius) / width;
            let mask = math::exp(-t * t);
            let texture = 0.5 + 0.4 * math::sin(freq * libm::atan2(dy, dx) + phase);
            img[y * s + x] += mask * texture;
        }
    }
    img
}

fn xor_image(s: usize, label: u8, rng: &mut SplitMix64) -> Vec<f64> {
    let first = rng.below(2) as u8;
    let second = first ^ label;
    let mut img = noise(s, 0.2, rng);
    let size = s / 4;
    let near = s / 8;
    let far = s - near - size;
    for (lit, origin) in [(first, near), (second, far)] {
        if lit == 0 {
            continue;
        }
        for y in origin..origin + size {
            for x in origin..origin + size {
                img[y * s + x] = rng.uniform(0.8, 1.0);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validation() {
        let imgs = Tensor::zeros(&[2, 1, 4, 4]);
        assert!(LabeledDataset::new(imgs.clone(), vec![0, 1], Split::Train).is_ok());
        assert!(LabeledDataset::new(imgs.clone(), vec![0], Split::Train).is_err());
        assert!(LabeledDataset::new(imgs.clone(), vec![0, 2], Split::Train).is_err());
        let mut bad = imgs;
        bad.data_mut()[0] = 1.5;
        assert!(LabeledDataset::new(bad, vec![0, 1], Split::Train).is_err());
    }

    #[test]
    fn synthetic_sets_are_deterministic_and_balanced() {
        for kind in [
            SynthKind::SeparableBlobs,
            SynthKind::TexturedRings,
            SynthKind::NoiseVsSignal,
        ] {
            let spec = SynthSpec::balanced(kind, 100, 7);
            let a = synth_dataset(&spec, Split::Train).unwrap();
            let b = synth_dataset(&spec, Split::Train).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.positives(), 50);
            assert_eq!(a.negatives(), 50);
            assert_eq!(SynthKind::from_name(kind.name()), Some(kind));
        }
    }

    #[test]
    fn split_names_round_trip() {
        for s in Split::ALL {
            assert_eq!(Split::from_name(s.name()), Some(s));
        }
        assert_eq!(Split::from_name("holdout"), None);
    }
}
