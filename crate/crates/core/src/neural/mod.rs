//! Reverse-mode classical layers: just enough for the convolutional
//! backbones, projection heads and the classification handler.
//!
//! Layers are stateless with respect to activations: `forward` returns
//! whatever `backward` needs and the caller keeps it.

mod adam;
mod backbone;
mod batchnorm;
mod layers;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use backbone::{Backbone, BackboneCache, BackboneKind, BackboneSpec, LayerDesc};
pub use batchnorm::{BatchNorm1d, BatchNormCache};
pub use layers::{
    maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward, Conv2d, ConvGrads,
    Linear, LinearGrads,
};
pub use loss::{cross_entropy, softmax2};
