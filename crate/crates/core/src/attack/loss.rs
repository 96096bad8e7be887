use crate::error::{Error, Result};

/// Value of the targeted margin loss and the logits it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvLoss {
    pub value: f64,
    /// Monte-Carlo mean logits `Ê[Z]`.
    pub mean_logits: Vec<f64>,
    /// Strongest non-target class (lowest index on ties).
    pub competitor: usize,
    /// False when the `−κ` floor is active and the gradient vanishes.
    pub active: bool,
}

impl AdvLoss {
    /// `Ê[Z_t] − max_{i≠t} Ê[Z_i]`.
    pub fn gap(&self, target: usize) -> f64 {
        self.mean_logits[target] - self.mean_logits[self.competitor]
    }

    /// Cotangent of the loss with respect to one sample's logits.
    pub fn sample_cotangent(&self, target: usize, samples: usize) -> Vec<f64> {
        let mut cot = vec![0.0; self.mean_logits.len()];
        if self.active {
            let w = 1.0 / samples as f64;
            cot[self.competitor] += w;
            cot[target] -= w;
        }
        cot
    }
}

/// `max{−κ, max_{i≠t} Ê[Z_i] − Ê[Z_t]}` over per-sample logit vectors.
pub fn adv_loss(logits: &[Vec<f64>], target: usize, kappa: f64) -> Result<AdvLoss> {
    let first = logits.first().ok_or(Error::EmptySamples)?;
    let m = first.len();
    if m < 2 || target >= m {
        return Err(Error::DimMismatch(format!(
            "target {target} is not a valid class of {m}"
        )));
    }
    if logits.iter().any(|z| z.len() != m) {
        return Err(Error::DimMismatch("logit vectors differ in length".into()));
    }
    let t = logits.len() as f64;
    let mut mean = vec![0.0; m];
    for z in logits {
        for (acc, v) in mean.iter_mut().zip(z) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= t;
    }
    let mut competitor = if target == 0 { 1 } else { 0 };
    for i in 0..m {
        if i != target && mean[i] > mean[competitor] {
            competitor = i;
        }
    }
    let margin = mean[competitor] - mean[target];
    let active = margin > -kappa;
    Ok(AdvLoss {
        value: if active { margin } else { -kappa },
        mean_logits: mean,
        competitor,
        active,
    })
}
