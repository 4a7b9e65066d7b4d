//! Quanvolutional layer: a quantum circuit evaluated over sliding windows.
//!
//! Each `c × k × k` window is flattened (channel-major, then rows), scaled
//! to rotation angles and fed to the circuit's encoding slots; the `n`
//! Pauli-Z expectations become the `n` output channels at that grid cell.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::qsim::{self, CircuitSpec};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QuanvMode {
    /// `θ` is learned with the classical weights.
    Trainable,
    /// `θ_fix ~ U[0, 2π)^m` is drawn once from the seed and never updated.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuanvConfig {
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub mode: QuanvMode,
    pub seed: u64,
    /// Pixel-to-radian factor; pixels in `[0, 1]` map to `[0, angle_scale]`.
    pub angle_scale: f64,
    pub circuit: CircuitSpec,
}

impl QuanvConfig {
    pub fn new(
        kernel: usize,
        stride: usize,
        in_channels: usize,
        mode: QuanvMode,
        seed: u64,
        angle_scale: f64,
        circuit: CircuitSpec,
    ) -> Result<Self> {
        let config = Self {
            kernel,
            stride,
            in_channels,
            mode,
            seed,
            angle_scale,
            circuit,
        };
        config.validate()?;
        Ok(config)
    }

    /// One input channel, 2×2 windows with stride 2, four qubits running the
    /// default ansatz, angle = π · pixel. A 28×28 image yields 4×14×14.
    pub fn standard(mode: QuanvMode, seed: u64) -> Self {
        Self::new(
            2,
            2,
            1,
            mode,
            seed,
            PI,
            CircuitSpec::default_ansatz(4).expect("4-qubit ansatz is valid"),
        )
        .expect("standard geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 {
            return Err(Error::InvalidConfig(
                "quanv kernel, stride and channel count must be >= 1".into(),
            ));
        }
        if !(self.angle_scale.is_finite() && self.angle_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "angle_scale must be positive, got {}",
                self.angle_scale
            )));
        }
        self.circuit.validate()?;
        let n = self.patch_len();
        if self.circuit.num_qubits() != n || self.circuit.num_encoding_slots() != n {
            return Err(Error::InvalidConfig(format!(
                "patch of {}x{}x{} needs {n} qubits and encoding slots; circuit has {} and {}",
                self.in_channels,
                self.kernel,
                self.kernel,
                self.circuit.num_qubits(),
                self.circuit.num_encoding_slots()
            )));
        }
        Ok(())
    }

    /// Features per patch, equal to the qubit count.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn num_params(&self) -> usize {
        self.circuit.num_param_slots()
    }

    /// `(n, H′, W′)` for an input of `height × width`.
    pub fn output_shape(&self, height: usize, width: usize) -> Result<[usize; 3]> {
        let (gh, gw) = grid_dims(height, width, self.kernel, self.stride)?;
        Ok([self.patch_len(), gh, gw])
    }
}

/// Circuit weights for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuanvState {
    theta: Vec<f64>,
    frozen: bool,
}

impl QuanvState {
    /// Draws `m` angles from `U[0, 2π)` with SplitMix64 seeded by
    /// `config.seed`. Fixed mode freezes them.
    pub fn init(config: &QuanvConfig) -> Self {
        let mut rng = SplitMix64::new(config.seed);
        let theta = (0..config.num_params()).map(|_| rng.angle()).collect();
        Self {
            theta,
            frozen: config.mode == QuanvMode::Fixed,
        }
    }

    /// Restores previously exported angles (for instance an imported `θ_fix`).
    pub fn from_theta(config: &QuanvConfig, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != config.num_params() {
            return Err(Error::DimensionMismatch {
                what: "quanv theta",
                expected: config.num_params(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("quanv theta"));
        }
        Ok(Self {
            theta,
            frozen: config.mode == QuanvMode::Fixed,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Mutable angles; `None` for a frozen layer.
    pub fn theta_mut(&mut self) -> Option<&mut [f64]> {
        if self.frozen {
            None
        } else {
            Some(&mut self.theta)
        }
    }
}

fn grid_dims(height: usize, width: usize, kernel: usize, stride: usize) -> Result<(usize, usize)> {
    if height < kernel || width < kernel {
        return Err(Error::ShapeMismatch(format!(
            "image {height}x{width} smaller than kernel {kernel}x{kernel}"
        )));
    }
    Ok(((height - kernel) / stride + 1, (width - kernel) / stride + 1))
}

/// Flattened windows in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub grid: (usize, usize),
    pub patch_len: usize,
    data: Vec<f64>,
}

impl Patches {
    pub fn len(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch(&self, index: usize) -> &[f64] {
        &self.data[index * self.patch_len..(index + 1) * self.patch_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.patch_len)
    }
}

/// Pixel index (into the `c×H×W` image) of each patch element, patch by
/// patch. Shared by extraction and the gradient scatter.
fn patch_pixel_indices(
    (c, h, w): (usize, usize, usize),
    kernel: usize,
    stride: usize,
) -> Result<((usize, usize), Vec<usize>)> {
    let (gh, gw) = grid_dims(h, w, kernel, stride)?;
    let mut idx = Vec::with_capacity(gh * gw * c * kernel * kernel);
    for r in 0..gh {
        for s in 0..gw {
            for ch in 0..c {
                for dy in 0..kernel {
                    for dx in 0..kernel {
                        idx.push(ch * h * w + (r * stride + dy) * w + s * stride + dx);
                    }
                }
            }
        }
    }
    Ok(((gh, gw), idx))
}

pub fn extract_patches(image: &Tensor, kernel: usize, stride: usize) -> Result<Patches> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidConfig("kernel and stride must be >= 1".into()));
    }
    let chw = image.chw()?;
    let (grid, idx) = patch_pixel_indices(chw, kernel, stride)?;
    let data = idx.iter().map(|&i| image.data()[i]).collect();
    Ok(Patches {
        grid,
        patch_len: chw.0 * kernel * kernel,
        data,
    })
}

fn check_image(image: &Tensor, config: &QuanvConfig) -> Result<()> {
    let (c, _, _) = image.chw()?;
    if c != config.in_channels {
        return Err(Error::DimensionMismatch {
            what: "quanv input channels",
            expected: config.in_channels,
            got: c,
        });
    }
    if !image.all_finite() {
        return Err(Error::NonFinite("quanv input image"));
    }
    Ok(())
}

fn check_state(config: &QuanvConfig, state: &QuanvState) -> Result<()> {
    if state.theta.len() != config.num_params() {
        return Err(Error::DimensionMismatch {
            what: "quanv theta",
            expected: config.num_params(),
            got: state.theta.len(),
        });
    }
    Ok(())
}

/// Output `n × H′ × W′`; channel `i` at `(r, s)` is `y_i` of the circuit on
/// the window at `(r, s)`.
pub fn quanv_forward(image: &Tensor, config: &QuanvConfig, state: &QuanvState) -> Result<Tensor> {
    check_image(image, config)?;
    check_state(config, state)?;
    let patches = extract_patches(image, config.kernel, config.stride)?;
    let n = config.patch_len();
    let cells = patches.len();
    let mut out = vec![0.0; n * cells];
    let mut angles = vec![0.0; n];
    for (cell, patch) in patches.iter().enumerate() {
        for (a, p) in angles.iter_mut().zip(patch) {
            *a = config.angle_scale * p;
        }
        let y = qsim::measure_all_z(&config.circuit, &angles, &state.theta)?;
        for (i, v) in y.into_iter().enumerate() {
            out[i * cells + cell] = v;
        }
    }
    Tensor::new(&[n, patches.grid.0, patches.grid.1], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuanvGrads {
    pub theta: Vec<f64>,
    pub image: Tensor,
}

/// Gradients of `Σ output · upstream`. Fixed mode returns exact zeros for
/// `θ`; the image gradient sums overlapping windows.
pub fn quanv_backward(
    image: &Tensor,
    config: &QuanvConfig,
    state: &QuanvState,
    upstream: &Tensor,
) -> Result<QuanvGrads> {
    let (theta, image_grad) = backward_impl(image, config, state, upstream, true)?;
    Ok(QuanvGrads {
        theta,
        image: image_grad.expect("requested"),
    })
}

/// As [`quanv_backward`] but only the `θ` gradient (used when the layer
/// sits directly on the input and pixel gradients are not needed).
pub fn quanv_theta_grad(
    image: &Tensor,
    config: &QuanvConfig,
    state: &QuanvState,
    upstream: &Tensor,
) -> Result<Vec<f64>> {
    Ok(backward_impl(image, config, state, upstream, false)?.0)
}

fn backward_impl(
    image: &Tensor,
    config: &QuanvConfig,
    state: &QuanvState,
    upstream: &Tensor,
    want_image: bool,
) -> Result<(Vec<f64>, Option<Tensor>)> {
    check_image(image, config)?;
    check_state(config, state)?;
    let chw = image.chw()?;
    let expected = config.output_shape(chw.1, chw.2)?;
    if upstream.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {:?} does not match quanv output {expected:?}",
            upstream.shape()
        )));
    }
    let (grid, pixel_idx) = patch_pixel_indices(chw, config.kernel, config.stride)?;
    let n = config.patch_len();
    let cells = grid.0 * grid.1;
    let m = config.num_params();

    let mut grad_theta = vec![0.0; m];
    let mut grad_image = want_image.then(|| vec![0.0; image.len()]);
    let want_theta = !state.frozen && m > 0;
    if !want_theta && grad_image.is_none() {
        return Ok((grad_theta, None));
    }

    let mut angles = vec![0.0; n];
    let mut slice = vec![0.0; n];
    for cell in 0..cells {
        let idx = &pixel_idx[cell * n..(cell + 1) * n];
        for (a, &i) in angles.iter_mut().zip(idx) {
            *a = config.angle_scale * image.data()[i];
        }
        for (i, u) in slice.iter_mut().enumerate() {
            *u = upstream.data()[i * cells + cell];
        }
        if slice.iter().all(|&u| u == 0.0) {
            continue;
        }
        if want_theta {
            let jac = qsim::param_shift_jacobian(&config.circuit, &angles, &state.theta)?;
            for (g, v) in grad_theta.iter_mut().zip(jac.transpose_mul(&slice)) {
                *g += v;
            }
        }
        if let Some(gi) = grad_image.as_mut() {
            let jac = qsim::encoding_shift_jacobian(&config.circuit, &angles, &state.theta)?;
            for (&i, v) in idx.iter().zip(jac.transpose_mul(&slice)) {
                gi[i] += v * config.angle_scale;
            }
        }
    }
    let grad_image = match grad_image {
        Some(g) => Some(Tensor::new(image.shape(), g)?),
        None => None,
    };
    Ok((grad_theta, grad_image))
}
