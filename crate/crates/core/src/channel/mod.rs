//! Projector→camera channel.
//!
//! A projected RGB value `δ` reaches the camera as illuminance
//! `I = (c_d/d²)·I_max·σ(a·‖δ‖∞ + b·P_a + c_t)`. Auto-exposure dims the whole
//! frame by `γ = I_env/(I + I_env)`, and the ghost itself appears as
//! `ρ·I·H_c·δ/‖δ‖∞`. The perceived pixel is `γ·(ghost + x)`.
//!
//! `‖·‖∞` is used both for the drive level `T_d` and for normalizing the
//! chroma. Projector pixels with `‖δ‖∞ < BLACK_EPSILON` emit no pattern light.

mod emulate;
mod fit;

pub use emulate::{emulate, emulate_forward, ClipGradient, EmulationTape, ExposureMode, Placement};
pub use fit::{
    color_samples_from_observations, fit_color_matrix, fit_flare_gain, fit_illuminance,
    read_color_csv, read_illuminance_csv, ColorObservation, IlluminanceFit, IlluminanceSample,
};

use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Matrix};
use serde::{Deserialize, Serialize};

/// Below this drive level a projector pixel counts as black.
pub const BLACK_EPSILON: f64 = 1e-6;

/// Every constant of the channel model plus the operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Sigmoid slope on the drive level `T_d`.
    pub a: f64,
    /// Sigmoid slope on bulb power `P_a`.
    pub b: f64,
    pub c_t: f64,
    pub c_d: f64,
    /// Maximum projector illuminance at 1 m, lux.
    pub i_max: f64,
    /// Ambient illuminance, lux.
    pub i_env: f64,
    /// Flare gain from illuminance to perceived intensity.
    pub rho: f64,
    pub color_matrix: Matrix,
    /// Projector-to-camera distance, meters.
    pub distance: f64,
    /// Normalized bulb power in `[0, 1]`.
    pub bulb_power: f64,
}

/// Color calibration matrix measured for the reference projector/camera pair.
pub fn reference_color_matrix() -> Matrix {
    Matrix::from_rows(&[[0.5, 0.0, 0.1], [0.0, 0.5, 0.0], [0.0, 0.0, 0.8]])
        .expect("constant matrix is well formed")
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            a: 8.9,
            b: 6.7,
            c_t: -7.8,
            c_d: 0.25,
            i_max: 1200.0,
            i_env: 300.0,
            rho: 30.0,
            color_matrix: reference_color_matrix(),
            distance: 1.0,
            bulb_power: 0.3,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_max > 0.0) {
            return Err(Error::Config(format!("i_max must be positive, got {}", self.i_max)));
        }
        if !(self.i_env > 0.0) {
            return Err(Error::NonPositiveAmbient(self.i_env));
        }
        if !(self.distance > 0.0) {
            return Err(Error::NonPositiveDistance(self.distance));
        }
        if !(0.0..=1.0).contains(&self.bulb_power) {
            return Err(Error::Config(format!(
                "bulb_power must be in [0, 1], got {}",
                self.bulb_power
            )));
        }
        if self.color_matrix.rows() != 3 || self.color_matrix.cols() != 3 {
            return Err(Error::DimMismatch("color matrix must be 3x3".into()));
        }
        let finite = [self.a, self.b, self.c_t, self.c_d, self.rho]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("channel constants must be finite".into()));
        }
        Ok(())
    }

    pub fn at_distance(&self, distance: f64) -> Self {
        Self {
            distance,
            ..self.clone()
        }
    }

    /// `c_d·I_max/d²`, the illuminance ceiling at the current distance.
    pub(crate) fn illuminance_scale(&self) -> f64 {
        self.c_d * self.i_max / (self.distance * self.distance)
    }

    /// Sigmoid argument for drive level `t_d` at the configured bulb power.
    pub(crate) fn logit(&self, t_d: f64) -> f64 {
        self.a * t_d + self.b * self.bulb_power + self.c_t
    }
}

/// Illuminance in lux at the camera for drive level `t_d`, bulb power `p_a`
/// and distance `d` meters.
pub fn illuminance(t_d: f64, p_a: f64, d: f64, params: &ChannelParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    Ok(params.c_d / (d * d) * params.i_max * sigmoid(params.a * t_d + params.b * p_a + params.c_t))
}

/// Auto-exposure dimming ratio `I_env/(I + I_env)`.
pub fn dimming(i: f64, i_env: f64) -> Result<f64> {
    if !(i_env > 0.0) {
        return Err(Error::NonPositiveAmbient(i_env));
    }
    Ok(i_env / (i + i_env))
}

/// Infinity norm and first argmax channel (ties go to the lower index).
pub(crate) fn max_channel(delta: &[f64]) -> (f64, usize) {
    let mut best = (delta[0], 0);
    for (k, &v) in delta.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, k);
        }
    }
    best
}

/// Perceived ghost intensity (before exposure dimming and clipping) for one
/// projector pixel, at the bulb power and distance stored in `params`.
pub fn flare_pixel(delta: [f64; 3], params: &ChannelParams) -> [f64; 3] {
    let (m, _) = max_channel(&delta);
    if m < BLACK_EPSILON {
        return [0.0; 3];
    }
    let i = params.illuminance_scale() * sigmoid(params.logit(m));
    let dir = [delta[0] / m, delta[1] / m, delta[2] / m];
    let h = params.color_matrix.mul_vec(&dir);
    [params.rho * i * h[0], params.rho * i * h[1], params.rho * i * h[2]]
}
