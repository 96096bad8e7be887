use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Shape of the asymmetric penalty `R(v) = e^{−α(v+ω)} + e^{β(v+ω)} − η`.
///
/// `ω` and `η` are chosen so that the minimum sits at `v = 0` with value 0.
/// Negative values cost more than positive ones because `α > β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyShape {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PenaltyShape {
    fn default() -> Self {
        Self { alpha: 8.0, beta: 2.0 }
    }
}

impl PenaltyShape {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.alpha > self.beta && self.alpha.is_finite()) {
            return Err(Error::InvalidShape {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }

    /// `ω = (ln α − ln β)/(α + β)`.
    pub fn omega(&self) -> f64 {
        (self.alpha.ln() - self.beta.ln()) / (self.alpha + self.beta)
    }

    /// `η = (α/β)^{−α/(α+β)} + (α/β)^{β/(α+β)}`, evaluated as
    /// `e^{−αω} + e^{βω}` so that `R(0)` is exactly zero in floating point.
    pub fn eta(&self) -> f64 {
        let w = self.omega();
        (-self.alpha * w).exp() + (self.beta * w).exp()
    }

    /// `R(v)`.
    pub fn value(&self, v: f64) -> f64 {
        let u = v + self.omega();
        (-self.alpha * u).exp() + (self.beta * u).exp() - self.eta()
    }

    /// `R'(v)`.
    pub fn derivative(&self, v: f64) -> f64 {
        let u = v + self.omega();
        -self.alpha * (-self.alpha * u).exp() + self.beta * (self.beta * u).exp()
    }
}

/// `R(v)` for shape `(α, β)`.
pub fn biased_penalty(v: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(PenaltyShape::new(alpha, beta)?.value(v))
}

/// `Σ R(μ)` over every block mean, and its gradient.
pub fn grid_penalty(mu: &[f64], shape: &PenaltyShape) -> (f64, Vec<f64>) {
    // Evaluated term by term so the −η centering makes μ ≡ 0 score exactly 0.
    let (omega, eta) = (shape.omega(), shape.eta());
    let mut total = 0.0;
    let grad = mu
        .iter()
        .map(|&v| {
            let u = v + omega;
            let (ea, eb) = ((-shape.alpha * u).exp(), (shape.beta * u).exp());
            total += ea + eb - eta;
            -shape.alpha * ea + shape.beta * eb
        })
        .collect();
    (total, grad)
}

/// Expected `p`-norm of a `w × h` single-color pattern with channel means
/// `μ`: `[(n/3)·Σ_c μ_c^p]^{1/p}` with `n = 3wh`.
pub fn expected_magnitude(mu: [f64; 3], width: usize, height: usize, p: f64) -> f64 {
    let n = (3 * width * height) as f64;
    (n / 3.0 * mu.iter().map(|m| m.powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Block-grid generalization of [`expected_magnitude`]: every block mean
/// counts once per pixel it covers. Returns the value and its gradient.
pub(crate) fn grid_magnitude(mu: &[f64], pixels_per_entry: f64, p: f64) -> (f64, Vec<f64>) {
    let s: f64 = mu.iter().map(|m| m.powf(p)).sum::<f64>() * pixels_per_entry;
    if s <= 0.0 {
        return (0.0, vec![0.0; mu.len()]);
    }
    let value = s.powf(1.0 / p);
    // d/dμ_k = value^{1−p} · pixels · μ_k^{p−1}
    let scale = value.powf(1.0 - p) * pixels_per_entry;
    (value, mu.iter().map(|m| scale * m.powf(p - 1.0)).collect())
}
