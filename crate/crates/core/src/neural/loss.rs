use crate::error::{Error, Result};
use crate::math;

/// Two-class softmax, stabilised by subtracting the max logit.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = math::exp(logits[0] - m);
    let e1 = math::exp(logits[1] - m);
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn cross_entropy(logits: [f64; 2], label: u8) -> Result<(f64, [f64; 2])> {
    if !logits[0].is_finite() || !logits[1].is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    if label > 1 {
        return Err(Error::InvalidConfig(alloc::format!("label {label} not in {{0, 1}}")));
    }
    let l = usize::from(label);
    let other = 1 - l;
    // log(1 + exp(z_other − z_label)), evaluated without overflow.
    let d = logits[other] - logits[l];
    let loss = if d > 0.0 {
        d + math::ln_1p(math::exp(-d))
    } else {
        math::ln_1p(math::exp(d))
    };
    let mut grad = softmax2(logits);
    grad[l] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_logits() {
        for label in [0, 1] {
            let (loss, grad) = cross_entropy([0.0, 0.0], label).unwrap();
            assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
            assert!((grad[0] + grad[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_correct() {
        let (loss, grad) = cross_entropy([30.0, -30.0], 0).unwrap();
        assert!(loss <= 1e-12);
        assert!(grad[0].abs() < 1e-12 && grad[1].abs() < 1e-12);
    }

    #[test]
    fn closed_form_wrong_class() {
        let (loss, _) = cross_entropy([1.0, -1.0], 1).unwrap();
        let expected = math::ln(1.0 + math::exp(2.0));
        assert!((loss - expected).abs() < 1e-14);
        assert!((loss - 2.126928).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(cross_entropy([f64::NAN, 0.0], 0).is_err());
        assert!(cross_entropy([f64::INFINITY, 0.0], 0).is_err());
        assert!(cross_entropy([0.0, 0.0], 2).is_err());
    }
}
