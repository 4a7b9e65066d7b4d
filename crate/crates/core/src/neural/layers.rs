use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

fn kaiming_bound(fan_in: usize) -> f64 {
    math::sqrt(6.0 / fan_in as f64)
}

/// Fully connected layer, `weight` is `[outputs, inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Kaiming-uniform on fan-in, zero bias.
    pub fn kaiming(inputs: usize, outputs: usize, rng: &mut SplitMix64) -> Self {
        let bound = kaiming_bound(inputs);
        let w = (0..inputs * outputs).map(|_| rng.uniform(-bound, bound)).collect();
        Self {
            weight: Tensor::new(&[outputs, inputs], w).expect("sized"),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut l = Self::zeros(size, size);
        for i in 0..size {
            l.weight.data_mut()[i * size + i] = 1.0;
        }
        l
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (o, i) = (self.outputs(), self.inputs());
        if x.len() != i {
            return Err(Error::DimensionMismatch {
                what: "linear input",
                expected: i,
                got: x.len(),
            });
        }
        let w = self.weight.data();
        Ok((0..o)
            .map(|r| {
                let row = &w[r * i..(r + 1) * i];
                self.bias.data()[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    /// Returns `(grad_input, grads)` for upstream `grad_out`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Vec<f64>, LinearGrads)> {
        let (o, i) = (self.outputs(), self.inputs());
        if x.len() != i || grad_out.len() != o {
            return Err(Error::ShapeMismatch(format!(
                "linear backward: input {} (want {i}), grad {} (want {o})",
                x.len(),
                grad_out.len()
            )));
        }
        let w = self.weight.data();
        let mut gw = vec![0.0; o * i];
        let mut gx = vec![0.0; i];
        for (r, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &w[r * i..(r + 1) * i];
            let grow = &mut gw[r * i..(r + 1) * i];
            for k in 0..i {
                grow[k] = g * x[k];
                gx[k] += g * row[k];
            }
        }
        Ok((
            gx,
            LinearGrads {
                weight: gw,
                bias: grad_out.to_vec(),
            },
        ))
    }
}

/// 2-D cross-correlation, `weight` is `[out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    pub fn kaiming(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        let mut c = Self::zeros(in_ch, out_ch, kernel, stride, padding);
        let bound = kaiming_bound(in_ch * kernel * kernel);
        for w in c.weight.data_mut() {
            *w = rng.uniform(-bound, bound);
        }
        c
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < k || pw < k || self.stride == 0 {
            return Err(Error::ShapeMismatch(format!(
                "conv {k}x{k} (pad {}) does not fit {h}x{w}",
                self.padding
            )));
        }
        Ok(((ph - k) / self.stride + 1, (pw - k) / self.stride + 1))
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.chw()?;
        if c != self.in_channels() {
            return Err(Error::DimensionMismatch {
                what: "conv input channels",
                expected: self.in_channels(),
                got: c,
            });
        }
        Ok((c, h, w))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.check_input(input)?;
        let (oh, ow) = self.output_hw(h, w)?;
        let k = self.kernel();
        let oc = self.out_channels();
        let (s, p) = (self.stride as isize, self.padding as isize);
        let x = input.data();
        let wt = self.weight.data();
        let mut out = vec![0.0; oc * oh * ow];
        let cols: Vec<(usize, usize)> = (0..k).map(|kx| valid_range(ow, w, s, kx as isize - p)).collect();
        for o in 0..oc {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(self.bias.data()[o]);
            for ci in 0..c {
                let xin = &x[ci * h * w..(ci + 1) * h * w];
                for ky in 0..k {
                    let (y0, y1) = valid_range(oh, h, s, ky as isize - p);
                    for kx in 0..k {
                        let wv = wt[((o * c + ci) * k + ky) * k + kx];
                        let (x0, x1) = cols[kx];
                        let ix0 = (x0 as isize * s + kx as isize - p) as usize;
                        for oy in y0..y1 {
                            let iy = (oy as isize * s + ky as isize - p) as usize;
                            let row = &xin[iy * w..(iy + 1) * w];
                            let orow = &mut plane[oy * ow + x0..oy * ow + x1];
                            if s == 1 {
                                for (ov, xv) in orow.iter_mut().zip(&row[ix0..]) {
                                    *ov += wv * xv;
                                }
                            } else {
                                for (ov, xv) in orow.iter_mut().zip(row[ix0..].iter().step_by(s as usize)) {
                                    *ov += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(&[oc, oh, ow], out)
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, ConvGrads)> {
        let (c, h, w) = self.check_input(input)?;
        let (oh, ow) = self.output_hw(h, w)?;
        let oc = self.out_channels();
        if grad_out.shape() != [oc, oh, ow] {
            return Err(Error::ShapeMismatch(format!(
                "conv backward: grad {:?}, expected {:?}",
                grad_out.shape(),
                [oc, oh, ow]
            )));
        }
        let k = self.kernel();
        let (s, p) = (self.stride as isize, self.padding as isize);
        let x = input.data();
        let wt = self.weight.data();
        let g = grad_out.data();
        let mut gx = vec![0.0; c * h * w];
        let mut gw = vec![0.0; wt.len()];
        let mut gb = vec![0.0; oc];
        let cols: Vec<(usize, usize)> = (0..k).map(|kx| valid_range(ow, w, s, kx as isize - p)).collect();
        let su = s as usize;
        for o in 0..oc {
            let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
            gb[o] = gplane.iter().sum();
            for ci in 0..c {
                let xin = &x[ci * h * w..(ci + 1) * h * w];
                let gxin = &mut gx[ci * h * w..(ci + 1) * h * w];
                for ky in 0..k {
                    let (y0, y1) = valid_range(oh, h, s, ky as isize - p);
                    for kx in 0..k {
                        let widx = ((o * c + ci) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let (x0, x1) = cols[kx];
                        let ix0 = (x0 as isize * s + kx as isize - p) as usize;
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = (oy as isize * s + ky as isize - p) as usize;
                            let grow = &gplane[oy * ow + x0..oy * ow + x1];
                            let base = iy * w + ix0;
                            if su == 1 {
                                let n = grow.len();
                                acc += grow.iter().zip(&xin[base..base + n]).map(|(g, x)| g * x).sum::<f64>();
                                for (gxv, gv) in gxin[base..base + n].iter_mut().zip(grow) {
                                    *gxv += gv * wv;
                                }
                            } else {
                                for (j, gv) in grow.iter().enumerate() {
                                    let idx = base + j * su;
                                    acc += gv * xin[idx];
                                    gxin[idx] += gv * wv;
                                }
                            }
                        }
                        gw[widx] = acc;
                    }
                }
            }
        }
        Ok((
            Tensor::new(&[c, h, w], gx)?,
            ConvGrads {
                weight: gw,
                bias: gb,
            },
        ))
    }
}

/// Output indices `lo..hi` whose input index `o * stride + offset` lies in
/// `0..n_in`.
fn valid_range(n_out: usize, n_in: usize, stride: isize, offset: isize) -> (usize, usize) {
    let n_in = n_in as isize;
    let mut lo = 0isize;
    while lo < n_out as isize && lo * stride + offset < 0 {
        lo += 1;
    }
    let mut hi = n_out as isize;
    while hi > lo && (hi - 1) * stride + offset >= n_in {
        hi -= 1;
    }
    (lo as usize, hi as usize)
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Non-overlapping `size × size` max pooling (floor on ragged edges).
/// Returns the output and, per output cell, the flat input index of the
/// winner; ties go to the first cell in row-major scan order.
pub fn maxpool2d_forward(input: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = input.chw()?;
    if size == 0 || h < size || w < size {
        return Err(Error::ShapeMismatch(format!(
            "maxpool {size} does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = (h / size, w / size);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ch * h * w + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = ch * h * w + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, arg))
}

pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &[f64]) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::DimensionMismatch {
            what: "maxpool gradient",
            expected: argmax.len(),
            got: grad_out.len(),
        });
    }
    let mut g = Tensor::zeros(input_shape);
    for (&i, &v) in argmax.iter().zip(grad_out) {
        g.data_mut()[i] += v;
    }
    Ok(g)
}
