use super::{GradientVector, PolicyParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Moving-average coefficient listed with the training hyperparameters.
/// The risk threshold already plays the baseline's role, so nothing
/// consumes it; it is kept for configuration parity.
pub const MOVING_AVERAGE_COEFF: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl<F: Scalar> PolicyParams<F> {
    /// Adam ascent step with the default moment decays.
    pub fn adam_update(&mut self, grad: &GradientVector<F>, lr: F) -> Result<()> {
        self.adam_update_with(grad, lr, AdamConfig::default())
    }

    /// Adam ascent step: `θ ← θ + lr · m̂ / (sqrt(v̂) + ε)`. On error the
    /// policy is left untouched.
    pub fn adam_update_with(&mut self, grad: &GradientVector<F>, lr: F, cfg: AdamConfig) -> Result<()> {
        if grad.len() != self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient has {} entries, policy has {}",
                grad.len(),
                self.weights.len()
            )));
        }
        if let Some(index) = grad.0.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { index, value: grad.0[index].as_f64() });
        }
        let (b1, b2, eps) = (F::lit(cfg.beta1), F::lit(cfg.beta2), F::lit(cfg.epsilon));
        let t = self.step + 1;
        let c1 = F::one() - b1.powi(t as i32);
        let c2 = F::one() - b2.powi(t as i32);
        let n = self.weights.len();
        let mut w = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let g = grad.0[i];
            let mi = b1 * self.first_moment[i] + (F::one() - b1) * g;
            let vi = b2 * self.second_moment[i] + (F::one() - b2) * g * g;
            let wi = self.weights[i] + lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            if !wi.is_finite() {
                return Err(Error::NonFinite { index: i, value: wi.as_f64() });
            }
            w.push(wi);
            m.push(mi);
            v.push(vi);
        }
        self.weights = w;
        self.first_moment = m;
        self.second_moment = v;
        self.step = t;
        Ok(())
    }
}
