use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// `lr = 0` is accepted (it freezes a group) even though a strictly
    /// positive rate is the normal case.
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr.is_finite() && self.lr >= 0.0)
            || !unit(self.beta1)
            || !unit(self.beta2)
            || !(self.epsilon.is_finite() && self.epsilon > 0.0)
        {
            return Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First/second moments and step counter for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn step(&mut self, param: &mut [f64], grad: &[f64], config: &AdamConfig) -> Result<()> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: state {}, param {}, grad {}",
                self.m.len(),
                param.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(config.beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(config.beta2, f64::from(t));
        for (((p, &g), m), v) in param
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.lr * m_hat / (math::sqrt(v_hat) + config.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_times_sign() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(1);
        let mut p = [1.0];
        st.step(&mut p, &[1.0], &cfg).unwrap();
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(3);
        let mut p = [0.5, -1.0, 2.0];
        for _ in 0..50 {
            st.step(&mut p, &[0.0; 3], &cfg).unwrap();
        }
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn two_constant_steps() {
        // With g = 1: m̂ = v̂ = 1 at every step, so each update is lr/(1 + ε).
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(1);
        let mut p = [1.0];
        st.step(&mut p, &[1.0], &cfg).unwrap();
        st.step(&mut p, &[1.0], &cfg).unwrap();
        assert!((p[0] - (1.0 - 2.0 * cfg.lr)).abs() < 1e-9);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn shape_and_config_checks() {
        let mut st = AdamState::new(2);
        assert!(st.step(&mut [0.0; 3], &[0.0; 3], &AdamConfig::default()).is_err());
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig::with_lr(-1.0).validate().is_err());
        assert!(AdamConfig::with_lr(0.0).validate().is_ok());
    }
}
