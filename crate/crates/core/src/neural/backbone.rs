use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{
    maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward, Conv2d, Linear,
};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackboneKind {
    Scnn,
    #[cfg_attr(feature = "serde", serde(rename = "mini_resnet"))]
    MiniResNet,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum LayerDesc {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Flatten,
    /// `relu(conv3x3(relu(conv3x3_s(x))) + shortcut(x))`; the shortcut is a
    /// strided 1×1 convolution when channels or resolution change.
    Residual {
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    GlobalAvgPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Chw(c, h, w) => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

fn conv_out(h: usize, w: usize, k: usize, s: usize, p: usize) -> Option<(usize, usize)> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    (s > 0 && ph >= k && pw >= k).then(|| ((ph - k) / s + 1, (pw - k) / s + 1))
}

impl LayerDesc {
    fn output(self, input: Shape) -> Result<Shape> {
        let bad = |why: &str| Err(Error::ShapeMismatch(format!("{self:?} on {input:?}: {why}")));
        match (self, input) {
            (
                LayerDesc::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Shape::Chw(c, h, w),
            ) => {
                if c != in_channels || out_channels == 0 || kernel == 0 {
                    return bad("channel mismatch");
                }
                match conv_out(h, w, kernel, stride, padding) {
                    Some((oh, ow)) => Ok(Shape::Chw(out_channels, oh, ow)),
                    None => bad("kernel does not fit"),
                }
            }
            (LayerDesc::Linear { inputs, outputs }, Shape::Flat(n)) => {
                if n != inputs || outputs == 0 {
                    return bad("width mismatch");
                }
                Ok(Shape::Flat(outputs))
            }
            (LayerDesc::Relu, s) => Ok(s),
            (LayerDesc::MaxPool { size }, Shape::Chw(c, h, w)) => {
                if size == 0 || h < size || w < size {
                    return bad("pool does not fit");
                }
                Ok(Shape::Chw(c, h / size, w / size))
            }
            (LayerDesc::Flatten, s) => Ok(Shape::Flat(s.len())),
            (
                LayerDesc::Residual {
                    in_channels,
                    out_channels,
                    stride,
                },
                Shape::Chw(c, h, w),
            ) => {
                if c != in_channels || out_channels == 0 {
                    return bad("channel mismatch");
                }
                match conv_out(h, w, 3, stride, 1) {
                    Some((oh, ow)) => Ok(Shape::Chw(out_channels, oh, ow)),
                    None => bad("block does not fit"),
                }
            }
            (LayerDesc::GlobalAvgPool, Shape::Chw(c, _, _)) => Ok(Shape::Flat(c)),
            _ => bad("layer cannot follow this shape"),
        }
    }

    fn param_count(self) -> usize {
        match self {
            LayerDesc::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * (in_channels * kernel * kernel + 1),
            LayerDesc::Linear { inputs, outputs } => outputs * (inputs + 1),
            LayerDesc::Residual {
                in_channels,
                out_channels,
                stride,
            } => {
                let main = out_channels * (in_channels * 9 + 1) + out_channels * (out_channels * 9 + 1);
                let shortcut = if in_channels != out_channels || stride != 1 {
                    out_channels * (in_channels + 1)
                } else {
                    0
                };
                main + shortcut
            }
            _ => 0,
        }
    }
}

/// Layer program of a classical feature extractor ending in an
/// `embed_dim`-wide vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerDesc>,
    pub embed_dim: usize,
}

impl BackboneSpec {
    /// Shallow CNN for `1×28×28` input:
    /// conv(1→16, 3×3, pad 1) → relu → maxpool 2 → conv(16→32, 3×3, pad 1)
    /// → relu → maxpool 2 → flatten (1568) → linear 1568→56 → relu →
    /// linear 56→`embed_dim`.
    pub fn scnn(embed_dim: usize) -> Self {
        Self {
            kind: BackboneKind::Scnn,
            input_shape: [1, 28, 28],
            layers: vec![
                conv(1, 16, 3, 1, 1),
                LayerDesc::Relu,
                LayerDesc::MaxPool { size: 2 },
                conv(16, 32, 3, 1, 1),
                LayerDesc::Relu,
                LayerDesc::MaxPool { size: 2 },
                LayerDesc::Flatten,
                LayerDesc::Linear {
                    inputs: 32 * 7 * 7,
                    outputs: 56,
                },
                LayerDesc::Relu,
                LayerDesc::Linear {
                    inputs: 56,
                    outputs: embed_dim,
                },
            ],
            embed_dim,
        }
    }

    /// Compact residual network: a 16-channel stem, three residual blocks
    /// at 16/32/64 channels, global average pooling and a linear map to
    /// `embed_dim`.
    pub fn mini_resnet(embed_dim: usize) -> Self {
        Self {
            kind: BackboneKind::MiniResNet,
            input_shape: [1, 28, 28],
            layers: vec![
                conv(1, 16, 3, 1, 1),
                LayerDesc::Relu,
                residual(16, 16, 1),
                residual(16, 32, 2),
                residual(32, 64, 2),
                LayerDesc::GlobalAvgPool,
                LayerDesc::Linear {
                    inputs: 64,
                    outputs: embed_dim,
                },
            ],
            embed_dim,
        }
    }

    pub fn custom(input_shape: [usize; 3], layers: Vec<LayerDesc>, embed_dim: usize) -> Result<Self> {
        let spec = Self {
            kind: BackboneKind::Custom,
            input_shape,
            layers,
            embed_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks that consecutive layers compose and end in `embed_dim`.
    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.input_shape;
        let mut shape = Shape::Chw(c, h, w);
        for layer in &self.layers {
            shape = layer.output(shape)?;
        }
        match shape {
            Shape::Flat(n) if n == self.embed_dim => Ok(()),
            other => Err(Error::ShapeMismatch(format!(
                "backbone ends in {other:?}, expected a flat {}-vector",
                self.embed_dim
            ))),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

fn conv(i: usize, o: usize, k: usize, s: usize, p: usize) -> LayerDesc {
    LayerDesc::Conv {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: p,
    }
}

fn residual(i: usize, o: usize, s: usize) -> LayerDesc {
    LayerDesc::Residual {
        in_channels: i,
        out_channels: o,
        stride: s,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResidualBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    shortcut: Option<Conv2d>,
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv(Conv2d),
    Linear(Linear),
    Relu,
    MaxPool(usize),
    Flatten,
    Residual(ResidualBlock),
    GlobalAvgPool,
}

/// Per-layer values saved by the forward pass.
#[derive(Debug, Clone)]
enum Saved {
    Input(Tensor),
    Pool { shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
    Residual {
        input: Tensor,
        a1: Tensor,
        r1: Tensor,
        pre: Tensor,
    },
}

#[derive(Debug, Clone)]
pub struct BackboneCache {
    saved: Vec<Saved>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    layers: Vec<Layer>,
}

impl Backbone {
    /// Kaiming-uniform weights (drawn in layer order), zero biases.
    pub fn init(spec: BackboneSpec, rng: &mut SplitMix64) -> Result<Self> {
        Self::build(spec, Some(rng))
    }

    pub fn zeros(spec: BackboneSpec) -> Result<Self> {
        Self::build(spec, None)
    }

    fn build(spec: BackboneSpec, mut rng: Option<&mut SplitMix64>) -> Result<Self> {
        spec.validate()?;
        fn make_conv(rng: Option<&mut SplitMix64>, i: usize, o: usize, k: usize, s: usize, p: usize) -> Conv2d {
            match rng {
                Some(r) => Conv2d::kaiming(i, o, k, s, p, r),
                None => Conv2d::zeros(i, o, k, s, p),
            }
        }
        let mut layers = Vec::with_capacity(spec.layers.len());
        for d in &spec.layers {
            let layer = match *d {
                LayerDesc::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => Layer::Conv(make_conv(rng.as_deref_mut(), in_channels, out_channels, kernel, stride, padding)),
                LayerDesc::Linear { inputs, outputs } => Layer::Linear(match rng.as_deref_mut() {
                    Some(r) => Linear::kaiming(inputs, outputs, r),
                    None => Linear::zeros(inputs, outputs),
                }),
                LayerDesc::Relu => Layer::Relu,
                LayerDesc::MaxPool { size } => Layer::MaxPool(size),
                LayerDesc::Flatten => Layer::Flatten,
                LayerDesc::Residual {
                    in_channels,
                    out_channels,
                    stride,
                } => Layer::Residual(ResidualBlock {
                    conv1: make_conv(rng.as_deref_mut(), in_channels, out_channels, 3, stride, 1),
                    conv2: make_conv(rng.as_deref_mut(), out_channels, out_channels, 3, 1, 1),
                    shortcut: (in_channels != out_channels || stride != 1)
                        .then(|| make_conv(rng.as_deref_mut(), in_channels, out_channels, 1, stride, 0)),
                }),
                LayerDesc::GlobalAvgPool => Layer::GlobalAvgPool,
            };
            layers.push(layer);
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn embed_dim(&self) -> usize {
        self.spec.embed_dim
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Named parameter tensors in a fixed order (layer order; weight before
    /// bias; residual blocks as conv1, conv2, shortcut).
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("layers.{i}.weight"), &c.weight));
                    out.push((format!("layers.{i}.bias"), &c.bias));
                }
                Layer::Linear(l) => {
                    out.push((format!("layers.{i}.weight"), &l.weight));
                    out.push((format!("layers.{i}.bias"), &l.bias));
                }
                Layer::Residual(b) => {
                    let convs = [Some(&b.conv1), Some(&b.conv2), b.shortcut.as_ref()];
                    for (name, c) in ["conv1", "conv2", "shortcut"].iter().zip(convs) {
                        if let Some(c) = c {
                            out.push((format!("layers.{i}.{name}.weight"), &c.weight));
                            out.push((format!("layers.{i}.{name}.bias"), &c.bias));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Same order as [`Backbone::params`].
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("layers.{i}.weight"), &mut c.weight));
                    out.push((format!("layers.{i}.bias"), &mut c.bias));
                }
                Layer::Linear(l) => {
                    out.push((format!("layers.{i}.weight"), &mut l.weight));
                    out.push((format!("layers.{i}.bias"), &mut l.bias));
                }
                Layer::Residual(b) => {
                    out.push((format!("layers.{i}.conv1.weight"), &mut b.conv1.weight));
                    out.push((format!("layers.{i}.conv1.bias"), &mut b.conv1.bias));
                    out.push((format!("layers.{i}.conv2.weight"), &mut b.conv2.weight));
                    out.push((format!("layers.{i}.conv2.bias"), &mut b.conv2.bias));
                    if let Some(c) = b.shortcut.as_mut() {
                        out.push((format!("layers.{i}.shortcut.weight"), &mut c.weight));
                        out.push((format!("layers.{i}.shortcut.bias"), &mut c.bias));
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, BackboneCache)> {
        if image.shape() != self.spec.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "backbone expects {:?}, got {:?}",
                self.spec.input_shape,
                image.shape()
            )));
        }
        let mut x = image.clone();
        let mut saved = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => {
                    let y = c.forward(&x)?;
                    saved.push(Saved::Input(x));
                    y
                }
                Layer::Linear(l) => {
                    let y = Tensor::from_vec(l.forward(x.data())?);
                    saved.push(Saved::Input(x));
                    y
                }
                Layer::Relu => {
                    let y = Tensor::new(x.shape(), relu_forward(x.data()))?;
                    saved.push(Saved::Input(x));
                    y
                }
                Layer::MaxPool(size) => {
                    let (y, argmax) = maxpool2d_forward(&x, *size)?;
                    saved.push(Saved::Pool {
                        shape: x.shape().to_vec(),
                        argmax,
                    });
                    y
                }
                Layer::Flatten => {
                    saved.push(Saved::Shape(x.shape().to_vec()));
                    let n = x.len();
                    x.reshape(&[n])?
                }
                Layer::GlobalAvgPool => {
                    let (c, h, w) = x.chw()?;
                    let hw = (h * w) as f64;
                    let y = x
                        .data()
                        .chunks_exact(h * w)
                        .map(|plane| plane.iter().sum::<f64>() / hw)
                        .collect();
                    saved.push(Saved::Shape(vec![c, h, w]));
                    Tensor::from_vec(y)
                }
                Layer::Residual(b) => {
                    let a1 = b.conv1.forward(&x)?;
                    let r1 = Tensor::new(a1.shape(), relu_forward(a1.data()))?;
                    let mut pre = b.conv2.forward(&r1)?;
                    match &b.shortcut {
                        Some(sc) => {
                            let s = sc.forward(&x)?;
                            add_assign(&mut pre, &s);
                        }
                        None => add_assign(&mut pre, &x),
                    }
                    let y = Tensor::new(pre.shape(), relu_forward(pre.data()))?;
                    saved.push(Saved::Residual {
                        input: x,
                        a1,
                        r1,
                        pre,
                    });
                    y
                }
            };
        }
        Ok((x.into_data(), BackboneCache { saved }))
    }

    /// Returns `(grad_input, parameter grads in params() order)`.
    pub fn backward(&self, cache: &BackboneCache, grad_embedding: &[f64]) -> Result<(Tensor, Vec<Vec<f64>>)> {
        if grad_embedding.len() != self.spec.embed_dim {
            return Err(Error::DimensionMismatch {
                what: "embedding gradient",
                expected: self.spec.embed_dim,
                got: grad_embedding.len(),
            });
        }
        if cache.saved.len() != self.layers.len() {
            return Err(Error::ShapeMismatch("cache from a different backbone".into()));
        }
        let mut g = Tensor::from_vec(grad_embedding.to_vec());
        // Collected per layer in reverse, then flipped.
        let mut grads_rev: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        for (layer, saved) in self.layers.iter().zip(&cache.saved).rev() {
            let mut layer_grads = Vec::new();
            g = match (layer, saved) {
                (Layer::Conv(c), Saved::Input(x)) => {
                    let (gx, cg) = c.backward(x, &g)?;
                    layer_grads.push(cg.weight);
                    layer_grads.push(cg.bias);
                    gx
                }
                (Layer::Linear(l), Saved::Input(x)) => {
                    let (gx, lg) = l.backward(x.data(), g.data())?;
                    layer_grads.push(lg.weight);
                    layer_grads.push(lg.bias);
                    Tensor::new(x.shape(), gx)?
                }
                (Layer::Relu, Saved::Input(x)) => Tensor::new(x.shape(), relu_backward(x.data(), g.data()))?,
                (Layer::MaxPool(_), Saved::Pool { shape, argmax }) => {
                    maxpool2d_backward(shape, argmax, g.data())?
                }
                (Layer::Flatten, Saved::Shape(shape)) => g.reshape(shape)?,
                (Layer::GlobalAvgPool, Saved::Shape(shape)) => {
                    let hw = shape[1] * shape[2];
                    let data = g
                        .data()
                        .iter()
                        .flat_map(|&v| core::iter::repeat_n(v / hw as f64, hw))
                        .collect();
                    Tensor::new(shape, data)?
                }
                (Layer::Residual(b), Saved::Residual { input, a1, r1, pre }) => {
                    let g_pre = Tensor::new(pre.shape(), relu_backward(pre.data(), g.data()))?;
                    let (g_r1, g2) = b.conv2.backward(r1, &g_pre)?;
                    let g_a1 = Tensor::new(a1.shape(), relu_backward(a1.data(), g_r1.data()))?;
                    let (mut gx, g1) = b.conv1.backward(input, &g_a1)?;
                    layer_grads.push(g1.weight);
                    layer_grads.push(g1.bias);
                    layer_grads.push(g2.weight);
                    layer_grads.push(g2.bias);
                    match &b.shortcut {
                        Some(sc) => {
                            let (gs, gsc) = sc.backward(input, &g_pre)?;
                            add_assign(&mut gx, &gs);
                            layer_grads.push(gsc.weight);
                            layer_grads.push(gsc.bias);
                        }
                        None => add_assign(&mut gx, &g_pre),
                    }
                    gx
                }
                _ => return Err(Error::ShapeMismatch("corrupt backbone cache".into())),
            };
            grads_rev.push(layer_grads);
        }
        let grads = grads_rev.into_iter().rev().flatten().collect();
        Ok((g, grads))
    }
}

fn add_assign(a: &mut Tensor, b: &Tensor) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}
