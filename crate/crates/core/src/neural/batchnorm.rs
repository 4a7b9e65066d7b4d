use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

const MOMENTUM: f64 = 0.1;
const EPS: f64 = 1e-5;

/// Batch normalisation over a batch of feature vectors. Training uses batch
/// statistics; evaluation uses the running estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNorm1d {
    pub fn new(width: usize) -> Self {
        Self {
            weight: Tensor::new(&[width], vec![1.0; width]).expect("sized"),
            bias: Tensor::zeros(&[width]),
            running_mean: Tensor::zeros(&[width]),
            running_var: Tensor::new(&[width], vec![1.0; width]).expect("sized"),
        }
    }

    pub fn width(&self) -> usize {
        self.weight.len()
    }

    /// Normalises with batch statistics (biased variance). Needs at least
    /// two samples.
    pub fn forward_train(&self, batch: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, BatchNormCache)> {
        let d = self.width();
        if batch.len() < 2 {
            return Err(Error::ShapeMismatch("batch norm needs a batch of at least 2".into()));
        }
        if let Some(bad) = batch.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                what: "batch norm input",
                expected: d,
                got: bad.len(),
            });
        }
        let n = batch.len() as f64;
        let mut mean = vec![0.0; d];
        for x in batch {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in batch {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + EPS)).collect();
        let normalized: Vec<Vec<f64>> = batch
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&mean)
                    .zip(&inv_std)
                    .map(|((v, m), s)| (v - m) * s)
                    .collect()
            })
            .collect();
        let out = normalized.iter().map(|xh| self.affine(xh)).collect();
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
                mean,
                var,
            },
        ))
    }

    pub fn forward_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.width() {
            return Err(Error::DimensionMismatch {
                what: "batch norm input",
                expected: self.width(),
                got: x.len(),
            });
        }
        let xh: Vec<f64> = x
            .iter()
            .zip(self.running_mean.data())
            .zip(self.running_var.data())
            .map(|((v, m), s)| (v - m) / math::sqrt(s + EPS))
            .collect();
        Ok(self.affine(&xh))
    }

    fn affine(&self, xh: &[f64]) -> Vec<f64> {
        xh.iter()
            .zip(self.weight.data())
            .zip(self.bias.data())
            .map(|((x, g), b)| g * x + b)
            .collect()
    }

    /// Returns `(grad_inputs, grad_weight, grad_bias)`.
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        grad_out: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        let d = self.width();
        if grad_out.len() != cache.normalized.len() {
            return Err(Error::DimensionMismatch {
                what: "batch norm gradient batch",
                expected: cache.normalized.len(),
                got: grad_out.len(),
            });
        }
        let n = grad_out.len() as f64;
        let mut gw = vec![0.0; d];
        let mut gb = vec![0.0; d];
        for (g, xh) in grad_out.iter().zip(&cache.normalized) {
            for j in 0..d {
                gw[j] += g[j] * xh[j];
                gb[j] += g[j];
            }
        }
        let gamma = self.weight.data();
        let grads = grad_out
            .iter()
            .zip(&cache.normalized)
            .map(|(g, xh)| {
                (0..d)
                    .map(|j| {
                        gamma[j] * cache.inv_std[j] / n * (n * g[j] - gb[j] - xh[j] * gw[j])
                    })
                    .collect()
            })
            .collect();
        Ok((grads, gw, gb))
    }

    /// Exponential moving update of the running statistics (unbiased
    /// variance).
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let n = cache.normalized.len() as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (r, m) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = (1.0 - MOMENTUM) * *r + MOMENTUM * m;
        }
        for (r, v) in self.running_var.data_mut().iter_mut().zip(&cache.var) {
            *r = (1.0 - MOMENTUM) * *r + MOMENTUM * v * unbias;
        }
    }
}
