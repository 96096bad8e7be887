//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use ghostlab::attack::{AttackConfig, AttackProblem};
use ghostlab::channel::{emulate_forward, ChannelParams, Placement};
use ghostlab::classifier::{Classifier, Layer, Shape};
use ghostlab::numkit::RngStream;
use ghostlab::ImageTensor;

/// Random conv net on 8×8 inputs with nonzero biases.
pub fn small_model(seed: u64, classes: usize) -> Classifier {
    let mut rng = RngStream::new(seed, 1);
    let mut layers = vec![
        Layer::conv(3, 6, 3, 1, &mut rng),
        Layer::Relu,
        Layer::MaxPool { size: 2 },
        Layer::Flatten,
        Layer::dense(6 * 3 * 3, 10, &mut rng),
        Layer::Relu,
        Layer::dense(10, classes, &mut rng),
    ];
    for l in &mut layers {
        if let Layer::Conv { bias, .. } | Layer::Dense { bias, .. } = l {
            bias.iter_mut().for_each(|b| *b = rng.uniform(-0.2, 0.2));
        }
    }
    Classifier::new(Shape { height: 8, width: 8, channels: 3 }, layers).unwrap()
}

/// Channel constants whose flare never leaves `[0, 1]`, so the clamp is
/// inactive and the composite objective is smooth.
pub fn low_gain_params() -> ChannelParams {
    ChannelParams { rho: 0.002, ..ChannelParams::default() }
}

/// Which linear piece of the composite objective `mu` sits on for every
/// trial of `iteration`: ReLU activity plus pooling winners, and the
/// brightest channel of every ghost pixel. `None` when a pattern sample or
/// an emulated pixel touches a clamp.
pub type PieceSignature = Vec<((Vec<bool>, Vec<usize>), Vec<usize>)>;

pub fn piece_signature(problem: &AttackProblem, mu: &[f64], iteration: usize) -> Option<PieceSignature> {
    let pattern = problem.pattern(mu);
    let mut out = Vec::with_capacity(problem.config.trials);
    for j in 0..problem.config.trials {
        let mut stream = problem.trial_stream(iteration, j);
        let s = ghostlab::attack::sample_pattern(&pattern, problem.placement.width, problem.placement.height, &mut stream)
            .unwrap();
        if s.image.data().iter().any(|x| *x <= 0.0 || *x >= 1.0) {
            return None;
        }
        let argmax: Vec<usize> = s
            .image
            .data()
            .chunks_exact(3)
            .map(|px| (0..3).fold(0, |best, c| if px[c] > px[best] { c } else { best }))
            .collect();
        let tape = emulate_forward(Some(&s.image), &problem.background, &problem.placement, problem.params, problem.config.exposure)
            .unwrap();
        if tape.pre_clip().data().iter().any(|y| *y < 0.0 || *y > 1.0) {
            return None;
        }
        let trace = problem.model.forward(&tape.output()).unwrap();
        out.push((trace.kink_signature(problem.model), argmax));
    }
    Some(out)
}

pub fn full_placement(w: usize, h: usize, side: usize) -> Placement {
    Placement::centered(w, h, side).unwrap()
}

pub fn random_mu(n: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

pub fn black(w: usize, h: usize) -> ImageTensor {
    ImageTensor::zeros(w, h)
}

/// Relative error of the objective gradient along a random direction
/// against a central difference with the same random numbers. `None`
/// when the configuration is too close to a kink to test.
pub fn directional_error(problem: &AttackProblem, mu: &[f64], iteration: usize, rng: &mut RngStream) -> Option<f64> {
    let h = 1e-6;
    let piece = piece_signature(problem, mu, iteration)?;
    let loss = problem.adv_loss_at(mu, iteration).unwrap();
    let mut sorted = loss.mean_logits.clone();
    sorted.remove(problem.config.target);
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sorted.len() > 1 && sorted[0] - sorted[1] < 1e-4 {
        return None;
    }
    let dir: Vec<f64> = (0..mu.len()).map(|_| rng.normal()).collect();
    let shifted = |s: f64| -> Vec<f64> { mu.iter().zip(&dir).map(|(m, d)| m + s * d).collect() };
    for s in [h, -h] {
        if piece_signature(problem, &shifted(s), iteration).as_ref() != Some(&piece) {
            return None;
        }
    }
    let (_, grad) = problem.objective(mu, iteration).unwrap();
    let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
    let fp = problem.objective(&shifted(h), iteration).unwrap().0;
    let fm = problem.objective(&shifted(-h), iteration).unwrap().0;
    let fd = (fp - fm) / (2.0 * h);
    Some((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12))
}

pub fn config_for(target: usize, trials: usize, sigma: f64) -> AttackConfig {
    AttackConfig { target, trials, sigma, kappa: 1e3, ..AttackConfig::default() }
}
