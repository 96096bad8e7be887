use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop after this many iterations without a new best objective.
    pub patience: Option<usize>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iters: 1500,
            patience: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// Result of [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    /// Lowest-objective point evaluated.
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Objective value at each evaluated iterate.
    pub trace: Vec<f64>,
}

/// Minimizes `objective` with Adam, projecting onto `[lo, hi]` after every
/// step when `bounds` is given.
///
/// `objective(x, k)` returns the value and gradient at iterate `k`; the
/// index lets stochastic objectives pick their random numbers per step.
pub fn optimize<F>(mut objective: F, x0: &[f64], config: &AdamConfig, bounds: Option<(f64, f64)>) -> Result<Optimized>
where
    F: FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)>,
{
    config.validate()?;
    let project = |x: &mut [f64]| {
        if let Some((lo, hi)) = bounds {
            for v in x.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut best = x.clone();
    let mut best_value = f64::INFINITY;
    let mut since_best = 0usize;
    let (mut b1t, mut b2t) = (1.0, 1.0);

    for k in 0..config.max_iters {
        let (value, grad) = objective(&x, k)?;
        if grad.len() != x.len() {
            return Err(Error::DimMismatch("objective gradient has the wrong length".into()));
        }
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective { iteration: k, trace });
        }
        trace.push(value);
        if value < best_value {
            best_value = value;
            best.copy_from_slice(&x);
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
        if k + 1 == config.max_iters {
            break;
        }
        b1t *= config.beta1;
        b2t *= config.beta2;
        for i in 0..x.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            x[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
        project(&mut x);
    }
    Ok(Optimized {
        best,
        best_value,
        trace,
    })
}
