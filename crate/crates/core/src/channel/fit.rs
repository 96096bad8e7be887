//! Parameter fits for the channel model from measured data.

use super::{dimming, max_channel, ChannelParams};
use crate::error::{Error, Result};
use crate::numkit::{lstsq, sigmoid, Matrix};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One illuminance-meter reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminanceSample {
    #[serde(rename = "T_d")]
    pub t_d: f64,
    #[serde(rename = "P_a")]
    pub p_a: f64,
    pub d: f64,
    #[serde(rename = "I")]
    pub lux: f64,
}

/// Result of [`fit_illuminance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminanceFit {
    pub a: f64,
    pub b: f64,
    pub c_t: f64,
    pub c_d: f64,
    pub rmse: f64,
    pub iterations: usize,
}

impl IlluminanceFit {
    pub fn apply(&self, params: &mut ChannelParams) {
        params.a = self.a;
        params.b = self.b;
        params.c_t = self.c_t;
        params.c_d = self.c_d;
    }
}

const MAX_ITERATIONS: usize = 200;

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    v.len()
}

fn sse(samples: &[IlluminanceSample], i_max: f64, theta: &[f64; 4]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let m = theta[3] * i_max / (s.d * s.d) * sigmoid(theta[0] * s.t_d + theta[1] * s.p_a + theta[2]);
            (m - s.lux).powi(2)
        })
        .sum()
}

/// Linear fit of `(a, b, c_t)` to `logit(I d² / (c_d I_max))` for a fixed
/// `c_d`, using only points strictly inside the sigmoid's range.
fn linearized(samples: &[IlluminanceSample], i_max: f64, c_d: f64) -> Option<[f64; 4]> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for s in samples {
        let ratio = s.lux * s.d * s.d / (c_d * i_max);
        if ratio > 1e-4 && ratio < 1.0 - 1e-4 {
            rows.push([s.t_d, s.p_a, 1.0]);
            rhs.push([(ratio / (1.0 - ratio)).ln()]);
        }
    }
    if rows.len() < 3 {
        return None;
    }
    let x = Matrix::from_rows(&rows).ok()?;
    let y = Matrix::from_rows(&rhs).ok()?;
    let coef = lstsq(&x, &y).ok()?;
    Some([coef[(0, 0)], coef[(1, 0)], coef[(2, 0)], c_d])
}

/// Fits `(a, b, c_t, c_d)` of the illuminance model to meter readings, with
/// `I_max` held fixed.
///
/// Initialization scans `c_d` over a log grid above the largest observed
/// `I d²/I_max`, solving the logit-linearized problem at each candidate; the
/// best candidate is then refined by damped Gauss–Newton.
pub fn fit_illuminance(samples: &[IlluminanceSample], i_max: f64) -> Result<IlluminanceFit> {
    if samples.len() < 4 {
        return Err(Error::InsufficientVariation(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    for (name, n) in [
        ("T_d", distinct(samples.iter().map(|s| s.t_d))),
        ("P_a", distinct(samples.iter().map(|s| s.p_a))),
        ("d", distinct(samples.iter().map(|s| s.d))),
    ] {
        if n < 2 {
            return Err(Error::InsufficientVariation(format!(
                "{name} takes a single value across all samples"
            )));
        }
    }
    if let Some(s) = samples.iter().find(|s| !(s.d > 0.0)) {
        return Err(Error::NonPositiveDistance(s.d));
    }

    let peak = samples
        .iter()
        .map(|s| s.lux * s.d * s.d / i_max)
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut theta = (0..80)
        .filter_map(|k| linearized(samples, i_max, peak * (1.0 + 1e-3) * 1.05f64.powi(k)))
        .min_by(|p, q| sse(samples, i_max, p).total_cmp(&sse(samples, i_max, q)))
        .ok_or_else(|| {
            Error::InsufficientVariation("too few readings inside the sigmoid's range".into())
        })?;

    let mut lambda = 1e-3;
    let mut current = sse(samples, i_max, &theta);
    for iteration in 1..=MAX_ITERATIONS {
        let mut jtj = Matrix::zeros(4, 4);
        let mut jtr = Matrix::zeros(4, 1);
        for s in samples {
            let k = i_max / (s.d * s.d);
            let sg = sigmoid(theta[0] * s.t_d + theta[1] * s.p_a + theta[2]);
            let dsg = theta[3] * k * sg * (1.0 - sg);
            let j = [dsg * s.t_d, dsg * s.p_a, dsg, k * sg];
            let r = theta[3] * k * sg - s.lux;
            for a in 0..4 {
                for b in 0..4 {
                    jtj[(a, b)] += j[a] * j[b];
                }
                jtr[(a, 0)] += j[a] * r;
            }
        }
        let grad_norm = (0..4).map(|a| jtr[(a, 0)].powi(2)).sum::<f64>().sqrt();
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..4 {
                damped[(a, a)] *= 1.0 + lambda;
            }
            let Ok(step) = damped.solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let candidate: [f64; 4] = std::array::from_fn(|a| theta[a] - step[(a, 0)]);
            let next = sse(samples, i_max, &candidate);
            if next <= current {
                let rel_step = (0..4)
                    .map(|a| (step[(a, 0)] / theta[a].abs().max(1e-12)).abs())
                    .fold(0.0, f64::max);
                theta = candidate;
                let improvement = current - next;
                current = next;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < 1e-13 || improvement <= 1e-15 * current.max(1e-300) {
                    return Ok(finish(theta, current, samples.len(), iteration));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || grad_norm == 0.0 {
            // No descent direction left: at a (numerical) minimum.
            return Ok(finish(theta, current, samples.len(), iteration));
        }
    }
    Err(Error::NonConvergence(MAX_ITERATIONS))
}

fn finish(theta: [f64; 4], sse: f64, n: usize, iterations: usize) -> IlluminanceFit {
    IlluminanceFit {
        a: theta[0],
        b: theta[1],
        c_t: theta[2],
        c_d: theta[3],
        rmse: (sse / n as f64).sqrt(),
        iterations,
    }
}

/// Least-squares color matrix from normalized pairs `(x̂, ŷ)` with `ŷ ≈ H x̂`.
pub fn fit_color_matrix(samples: &[([f64; 3], [f64; 3])]) -> Result<Matrix> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "need at least 3 color pairs, got {}",
            samples.len()
        )));
    }
    let x = Matrix::from_rows(&samples.iter().map(|s| s.0).collect::<Vec<_>>())?;
    let y = Matrix::from_rows(&samples.iter().map(|s| s.1).collect::<Vec<_>>())?;
    Ok(lstsq(&x, &y)?.transpose())
}

/// Raw projected color and its perceived ghost color on a dark background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorObservation {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub yr: f64,
    pub yg: f64,
    pub yb: f64,
}

/// Normalizes raw observations into `(δ/‖δ‖∞, y/(ρ I γ))` pairs using the
/// illuminance and flare constants in `params`. Black projections are
/// skipped.
pub fn color_samples_from_observations(
    observations: &[ColorObservation],
    params: &ChannelParams,
) -> Result<Vec<([f64; 3], [f64; 3])>> {
    params.validate()?;
    let mut out = Vec::with_capacity(observations.len());
    for o in observations {
        let delta = [o.r, o.g, o.b];
        let (m, _) = max_channel(&delta);
        if m < super::BLACK_EPSILON {
            continue;
        }
        let i = params.illuminance_scale() * sigmoid(params.logit(m));
        let gain = params.rho * i * dimming(i, params.i_env)?;
        out.push((delta.map(|v| v / m), [o.yr / gain, o.yg / gain, o.yb / gain]));
    }
    Ok(out)
}

/// Flare gain `ρ` from `(I, ‖y_f‖∞)` pairs: the scalar least-squares solution
/// of `‖y_f‖ = γ(I)·ρ·I`.
pub fn fit_flare_gain(samples: &[(f64, f64)], i_env: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(i, y) in samples {
        let gi = dimming(i, i_env)? * i;
        num += y * gi;
        den += gi * gi;
    }
    if den == 0.0 {
        return Err(Error::AllZeroIlluminance);
    }
    Ok(num / den)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(offset, format!("{}: {kind:?}", path.display())),
    }
}

/// Reads a `T_d,P_a,d,I` CSV file.
pub fn read_illuminance_csv(path: &Path) -> Result<Vec<IlluminanceSample>> {
    read_csv(path)
}

/// Reads an `r,g,b,yr,yg,yb` CSV file.
pub fn read_color_csv(path: &Path) -> Result<Vec<ColorObservation>> {
    read_csv(path)
}
