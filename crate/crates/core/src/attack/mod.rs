//! Adversarial ghost-pattern synthesis.
//!
//! A pattern is a grid of block means `μ`. Each Monte-Carlo trial draws
//! `Δ = clamp(μ + σε)`, pushes it through the channel model onto the
//! background, and classifies the result. The solver minimizes
//! `Σ R(μ) + c·L_adv` with Adam, where `R` is the biased penalty and
//! `L_adv` the targeted logit-margin loss on the trial-averaged logits.
//! Gradients flow pathwise through the sampled noise.

mod adam;
mod loss;
mod pattern;
mod penalty;

pub use adam::{optimize, AdamConfig, Optimized};
pub use loss::{adv_loss, AdvLoss};
pub use pattern::{sample_pattern, GridPattern, PatternSample};
pub use penalty::{biased_penalty, expected_magnitude, grid_penalty, PenaltyShape};

use crate::channel::{emulate, emulate_forward, ChannelParams, ClipGradient, ExposureMode, Placement};
use crate::classifier::{argmax, Classifier};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::numkit::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const TRIAL_STREAM: u64 = 0xA77A;
const EVAL_STREAM: u64 = 0xE7A1;

/// Whether the ghost invents an object on a dark background or alters an
/// existing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    #[default]
    Creation,
    Alteration,
}

/// Which size term the solver trades against the adversarial loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of biased penalties over block means.
    #[default]
    Penalty,
    /// Expected `p`-norm of the projected pattern.
    Magnitude,
}

/// Attack hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub target: usize,
    pub mode: AttackMode,
    /// Confidence margin `κ`.
    pub kappa: f64,
    /// Trade-off constant `c`.
    pub c: f64,
    pub objective: Objective,
    pub penalty: PenaltyShape,
    /// Norm order for [`Objective::Magnitude`].
    pub p: f64,
    /// Monte-Carlo trials `T` per iteration.
    pub trials: usize,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_rgb: Option<[f64; 3]>,
    /// 3 for an RGB grid, 1 for gray blocks.
    pub channels: usize,
    /// Initial value of every block mean.
    pub init: f64,
    pub adam: AdamConfig,
    pub exposure: ExposureMode,
    pub clip_gradient: ClipGradient,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            target: 0,
            mode: AttackMode::Creation,
            kappa: 10.0,
            c: 10.0,
            objective: Objective::Penalty,
            penalty: PenaltyShape::default(),
            p: 2.0,
            trials: 10,
            sigma: 0.03,
            sigma_rgb: None,
            channels: 3,
            init: 0.05,
            adam: AdamConfig::default(),
            exposure: ExposureMode::PerPixel,
            clip_gradient: ClipGradient::StraightThrough,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        self.adam.validate()?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config("kappa must be finite and non-negative".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config("c must be positive".into()));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config("channels must be 1 or 3".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.init) {
            return Err(Error::Config("init must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Outcome of one [`solve_attack`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub target: usize,
    pub mode: AttackMode,
    /// Best pattern found (σ as configured).
    pub pattern: GridPattern,
    /// Objective value per iteration.
    pub trace: Vec<f64>,
    pub best_objective: f64,
    /// Class predicted on the quantized evaluation image.
    pub predicted: usize,
    pub success: bool,
    /// `Z_t − max_{i≠t} Z_i` on the evaluation image.
    pub logits_gap: f64,
    pub eval_logits: Vec<f64>,
    /// SHA-256 of the quantized evaluation image.
    pub image_checksum: String,
    /// Not serialized, so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Writes `iteration,objective` rows.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "iteration,objective").expect("in-memory write");
        for (k, v) in self.trace.iter().enumerate() {
            writeln!(out, "{k},{v}").expect("in-memory write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Everything the stochastic objective needs besides `μ`.
pub struct AttackProblem<'a> {
    pub model: &'a Classifier,
    pub params: &'a ChannelParams,
    pub placement: Placement,
    pub background: ImageTensor,
    pub config: &'a AttackConfig,
}

struct Trial {
    sample: PatternSample,
    tape: crate::channel::EmulationTape,
    trace: crate::classifier::Trace,
}

impl<'a> AttackProblem<'a> {
    /// Sets up a problem; creation attacks replace `background` with black.
    pub fn new(
        model: &'a Classifier,
        params: &'a ChannelParams,
        placement: Placement,
        background: &ImageTensor,
        config: &'a AttackConfig,
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        placement.validate(background.width(), background.height())?;
        if config.target >= model.num_classes() {
            return Err(Error::Config(format!(
                "target {} is not one of the model's {} classes",
                config.target,
                model.num_classes()
            )));
        }
        let background = match config.mode {
            AttackMode::Creation => ImageTensor::zeros(background.width(), background.height()),
            AttackMode::Alteration => background.clone(),
        };
        Ok(Self {
            model,
            params,
            placement,
            background,
            config,
        })
    }

    pub fn pattern(&self, mu: &[f64]) -> GridPattern {
        GridPattern {
            rows: self.placement.rows,
            cols: self.placement.cols,
            channels: self.config.channels,
            mu: mu.to_vec(),
            sigma: self.config.sigma,
            sigma_rgb: self.config.sigma_rgb,
        }
    }

    /// Common-random-number stream of trial `trial` at `iteration`.
    pub fn trial_stream(&self, iteration: usize, trial: usize) -> RngStream {
        RngStream::new(self.config.seed, TRIAL_STREAM)
            .derive(iteration as u64)
            .derive(trial as u64)
    }

    fn run_trial(&self, pattern: &GridPattern, iteration: usize, trial: usize) -> Result<Trial> {
        let mut stream = self.trial_stream(iteration, trial);
        let sample = sample_pattern(pattern, self.placement.width, self.placement.height, &mut stream)?;
        let tape = emulate_forward(
            Some(&sample.image),
            &self.background,
            &self.placement,
            self.params,
            self.config.exposure,
        )?;
        let trace = self.model.forward(&tape.output())?;
        Ok(Trial { sample, tape, trace })
    }

    fn size_term(&self, mu: &[f64]) -> (f64, Vec<f64>) {
        match self.config.objective {
            Objective::Penalty => grid_penalty(mu, &self.config.penalty),
            Objective::Magnitude => {
                let per_entry = (self.placement.block_width() * self.placement.block_height() * 3
                    / self.config.channels) as f64;
                penalty::grid_magnitude(mu, per_entry, self.config.p)
            }
        }
    }

    /// Adversarial loss alone, with the trial streams of `iteration`.
    pub fn adv_loss_at(&self, mu: &[f64], iteration: usize) -> Result<AdvLoss> {
        let pattern = self.pattern(mu);
        let logits: Result<Vec<Vec<f64>>> = (0..self.config.trials)
            .into_par_iter()
            .map(|j| Ok(self.run_trial(&pattern, iteration, j)?.trace.logits().to_vec()))
            .collect();
        adv_loss(&logits?, self.config.target, self.config.kappa)
    }

    /// Objective value and gradient at `μ` using the random numbers of
    /// `iteration`.
    pub fn objective(&self, mu: &[f64], iteration: usize) -> Result<(f64, Vec<f64>)> {
        let pattern = self.pattern(mu);
        let trials: Result<Vec<Trial>> = (0..self.config.trials)
            .into_par_iter()
            .map(|j| self.run_trial(&pattern, iteration, j))
            .collect();
        let trials = trials?;
        let logits: Vec<Vec<f64>> = trials.iter().map(|t| t.trace.logits().to_vec()).collect();
        let loss = adv_loss(&logits, self.config.target, self.config.kappa)?;
        let (size, mut grad) = self.size_term(mu);
        let c = self.config.c;
        if loss.active {
            let cot = loss.sample_cotangent(self.config.target, self.config.trials);
            let grads: Result<Vec<Vec<f64>>> = trials
                .par_iter()
                .map(|t| {
                    let g_in = self.model.backward(&t.trace, &cot, None)?;
                    let g_y = ImageTensor::from_data(self.background.width(), self.background.height(), g_in)?;
                    let g_delta = t.tape.backward(&g_y, self.config.clip_gradient)?;
                    let mut g_mu = vec![0.0; mu.len()];
                    t.sample.accumulate_mu_grad(&g_delta, &mut g_mu)?;
                    Ok(g_mu)
                })
                .collect();
            for g in grads? {
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += c * v;
                }
            }
        }
        Ok((size + c * loss.value, grad))
    }

    /// Quantized perceived image for one fresh draw of `pattern`.
    pub fn perceive(&self, pattern: &GridPattern, stream: &mut RngStream) -> Result<ImageTensor> {
        let sample = sample_pattern(pattern, self.placement.width, self.placement.height, stream)?;
        emulate(
            Some(&sample.image),
            &self.background,
            &self.placement,
            self.params,
            self.config.exposure,
            true,
        )
    }

    /// Stream for the `index`-th success evaluation, disjoint from every
    /// optimization stream.
    pub fn eval_stream(&self, index: u64) -> RngStream {
        RngStream::new(self.config.seed, EVAL_STREAM).derive(index)
    }
}

/// Optimizes a ghost pattern that makes `model` see class `config.target`.
///
/// The grid takes its shape from `placement`. Success is judged on a fresh,
/// quantized emulation of the best pattern found.
pub fn solve_attack(
    model: &Classifier,
    params: &ChannelParams,
    placement: &Placement,
    background: &ImageTensor,
    config: &AttackConfig,
) -> Result<AttackReport> {
    let start = std::time::Instant::now();
    let problem = AttackProblem::new(model, params, *placement, background, config)?;
    let n = placement.rows * placement.cols * config.channels;
    let result = optimize(
        |mu, k| problem.objective(mu, k),
        &vec![config.init; n],
        &config.adam,
        Some((0.0, 1.0)),
    )?;
    let pattern = problem.pattern(&result.best);
    let image = problem.perceive(&pattern, &mut problem.eval_stream(0))?;
    let eval_logits = model.logits(&image)?;
    let predicted = argmax(&eval_logits);
    let gap = adv_gap(&eval_logits, config.target);
    Ok(AttackReport {
        target: config.target,
        mode: config.mode,
        pattern,
        trace: result.trace,
        best_objective: result.best_value,
        predicted,
        success: predicted == config.target,
        logits_gap: gap,
        eval_logits,
        image_checksum: image.checksum(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn adv_gap(z: &[f64], target: usize) -> f64 {
    let other = z
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    z[target] - other
}
