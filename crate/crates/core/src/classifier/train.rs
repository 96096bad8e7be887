use super::dataset::Dataset;
use super::network::{argmax, softmax, Classifier, Gradients};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::numkit::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-sample gradients within a minibatch are summed in chunks of this size
/// and the chunk sums are reduced in index order, so results do not depend
/// on the number of worker threads.
const GRAD_CHUNK: usize = 8;

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub test_fraction: f64,
    pub seed: u64,
    /// Minibatch gradients with a larger global L2 norm are rescaled to it.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 20,
            test_fraction: 0.2,
            seed: 0,
            max_grad_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_accuracy: f64,
    /// `None` when the test split is empty.
    pub test_accuracy: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
    /// Mean training loss over each epoch's minibatches.
    pub epoch_losses: Vec<f64>,
}

/// Softmax cross-entropy of one sample and its logit cotangent.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    p[label] -= 1.0;
    (loss, p)
}

/// Mean cross-entropy over `dataset`.
pub fn mean_loss(model: &Classifier, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, &y) in dataset.images.iter().zip(&dataset.labels) {
        total += cross_entropy(&model.logits(x)?, y).0;
    }
    Ok(total / dataset.len() as f64)
}

/// Top-1 accuracy over `dataset` (0 for an empty set).
pub fn accuracy(model: &Classifier, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let hits: Result<Vec<bool>> = dataset
        .images
        .par_iter()
        .zip(&dataset.labels)
        .map(|(x, &y)| Ok(argmax(&model.logits(x)?) == y))
        .collect();
    Ok(hits?.into_iter().filter(|h| *h).count() as f64 / dataset.len() as f64)
}

fn batch_gradient(model: &Classifier, images: &[&ImageTensor], labels: &[usize]) -> Result<(Gradients, f64)> {
    let pairs: Vec<(&ImageTensor, usize)> = images.iter().copied().zip(labels.iter().copied()).collect();
    let chunks: Result<Vec<(Gradients, f64)>> = pairs
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros_like(model);
            let mut loss = 0.0;
            for (x, y) in chunk {
                let trace = model.forward(x)?;
                let (l, cot) = cross_entropy(trace.logits(), *y);
                loss += l;
                model.backward(&trace, &cot, Some(&mut g))?;
            }
            Ok((g, loss))
        })
        .collect();
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (g, l) in chunks? {
        total.add_assign(&g);
        loss += l;
    }
    let n = images.len() as f64;
    total.scale(1.0 / n);
    Ok((total, loss / n))
}

/// Runs minibatch SGD with momentum on `model` over every sample of
/// `dataset`, in seeded shuffled order.
pub fn fit(model: &mut Classifier, dataset: &Dataset, config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = RngStream::new(config.seed, 0x7A1);
    let mut velocity = Gradients::zeros_like(model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&ImageTensor> = batch.iter().map(|&i| &dataset.images[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| dataset.labels[i]).collect();
            let (mut grad, loss) = batch_gradient(model, &images, &labels)?;
            if let Some(max) = config.max_grad_norm {
                let norm = grad.norm();
                if norm > max {
                    grad.scale(max / norm);
                }
            }
            velocity.scale(config.momentum);
            velocity.add_assign(&grad);
            model.apply_update(&velocity, config.learning_rate);
            sum += loss;
            batches += 1;
        }
        epoch_losses.push(sum / batches.max(1) as f64);
    }
    Ok(epoch_losses)
}

/// Trains the default architecture on a stratified split of `dataset`.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(Classifier, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let (w, h) = (dataset.images[0].width(), dataset.images[0].height());
    let mut model = Classifier::default_architecture(w, h, dataset.num_classes(), config.seed)?
        .with_class_names(dataset.class_names.clone())?;
    let (train_idx, test_idx) = dataset.stratified_split(config.test_fraction, config.seed);
    let train_set = dataset.subset(&train_idx);
    let test_set = dataset.subset(&test_idx);
    let epoch_losses = fit(&mut model, &train_set, config)?;
    let report = TrainReport {
        train_accuracy: accuracy(&model, &train_set)?,
        test_accuracy: if test_set.is_empty() {
            None
        } else {
            Some(accuracy(&model, &test_set)?)
        },
        train_size: train_set.len(),
        test_size: test_set.len(),
        epoch_losses,
    };
    Ok((model, report))
}
