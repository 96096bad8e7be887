//! Small differentiable image classifier and a synthetic sign dataset.
//!
//! The network is a stack of unpadded convolutions, ReLUs, max-pools and
//! dense layers operating on HWC buffers. [`Classifier::input_grad`] gives
//! the reverse-mode gradient of any logit contraction with respect to the
//! input image, which is all the attack needs.

mod dataset;
mod network;
mod train;

pub use dataset::{gen_dataset, Dataset, CLASS_NAMES};
pub use network::{argmax, softmax, Classifier, Gradients, Layer, Shape, Trace};
pub use train::{accuracy, cross_entropy, fit, mean_loss, train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "ghostlab-classifier";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    input: Shape,
    #[serde(default)]
    class_names: Option<Vec<String>>,
    layers: Vec<Layer>,
}

impl Classifier {
    /// JSON encoding; floats use shortest round-trip decimal form.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            input: self.input_shape(),
            class_names: Some(self.class_names().to_vec()),
            layers: self.layers().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::json(text, e))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::parse(
                0,
                format!("unsupported model format {} v{}", file.format, file.version),
            ));
        }
        let model = Classifier::new(file.input, file.layers)?;
        match file.class_names {
            Some(names) => model.with_class_names(names),
            None => Ok(model),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;
    use crate::numkit::RngStream;

    fn random_image(w: usize, h: usize, rng: &mut RngStream) -> ImageTensor {
        let data = (0..w * h * 3).map(|_| rng.next_f64()).collect();
        ImageTensor::from_data(w, h, data).unwrap()
    }

    fn small_model(seed: u64) -> Classifier {
        let mut rng = RngStream::new(seed, 1);
        let layers = vec![
            Layer::conv(3, 4, 3, 1, &mut rng),
            Layer::Relu,
            Layer::MaxPool { size: 2 },
            Layer::conv(4, 5, 2, 1, &mut rng),
            Layer::Relu,
            Layer::Flatten,
            Layer::dense(5 * 2 * 2, 6, &mut rng),
            Layer::Relu,
            Layer::dense(6, 4, &mut rng),
        ];
        let mut model = Classifier::new(Shape { height: 8, width: 8, channels: 3 }, layers).unwrap();
        // Nonzero biases keep ReLUs away from exact zero inputs.
        let mut brng = RngStream::new(seed, 2);
        let layers: Vec<Layer> = model
            .layers()
            .iter()
            .cloned()
            .map(|mut l| {
                if let Layer::Conv { bias, .. } | Layer::Dense { bias, .. } = &mut l {
                    bias.iter_mut().for_each(|b| *b = brng.uniform(-0.1, 0.1));
                }
                l
            })
            .collect();
        model = Classifier::new(model.input_shape(), layers).unwrap();
        model
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let layers = vec![
            Layer::Flatten,
            Layer::Dense { inputs: 12, outputs: 4, weights: vec![0.0; 48], bias: vec![0.0; 4] },
        ];
        let m = Classifier::new(Shape { height: 2, width: 2, channels: 3 }, layers).unwrap();
        let z = m.logits(&ImageTensor::filled(2, 2, [0.3, 0.6, 0.9])).unwrap();
        assert_eq!(z, vec![0.0; 4]);
        for p in softmax(&z) {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_dense_network() {
        let layers = vec![Layer::Dense {
            inputs: 3,
            outputs: 3,
            weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            bias: vec![0.0; 3],
        }];
        let m = Classifier::new(Shape { height: 1, width: 1, channels: 3 }, layers).unwrap();
        let x = ImageTensor::from_data(1, 1, vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(m.logits(&x).unwrap(), vec![0.2, 0.5, 0.3]);
    }

    #[test]
    fn linear_model_gradient_is_transpose_product() {
        let mut rng = RngStream::new(5, 0);
        let layers = vec![Layer::Flatten, Layer::dense(12, 3, &mut rng)];
        let m = Classifier::new(Shape { height: 2, width: 2, channels: 3 }, layers).unwrap();
        let Layer::Dense { weights, .. } = &m.layers()[1] else { unreachable!() };
        let cot = [0.5, -1.0, 2.0];
        let expect: Vec<f64> = (0..12).map(|j| (0..3).map(|o| weights[o * 12 + j] * cot[o]).sum()).collect();
        for _ in 0..3 {
            let x = random_image(2, 2, &mut rng);
            let g = m.input_grad(&x, &cot).unwrap();
            for (a, b) in g.data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let zero = m.input_grad(&random_image(2, 2, &mut rng), &[0.0; 3]).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn input_grad_matches_finite_differences() {
        let m = small_model(7);
        let mut rng = RngStream::new(8, 0);
        let mut checked = 0;
        while checked < 100 {
            let x = random_image(8, 8, &mut rng);
            let trace = m.forward(&x).unwrap();
            if trace.min_relu_margin(&m) < 1e-6 {
                continue;
            }
            let cot: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let g = m.input_grad(&x, &cot).unwrap();
            let f = |img: &ImageTensor| -> f64 {
                m.logits(img).unwrap().iter().zip(&cot).map(|(a, b)| a * b).sum()
            };
            let j = rng.below(x.len());
            let h = 1e-5;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[j] += h;
            xm.data_mut()[j] -= h;
            let same = m.forward(&xp).unwrap().kink_signature(&m) == trace.kink_signature(&m)
                && m.forward(&xm).unwrap().kink_signature(&m) == trace.kink_signature(&m);
            if !same {
                continue;
            }
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let err = (fd - g.data()[j]).abs() / fd.abs().max(g.data()[j].abs()).max(1e-8);
            assert!(err <= 1e-4 || (fd - g.data()[j]).abs() < 1e-10, "coord {j}: fd {fd} vs {}", g.data()[j]);
            checked += 1;
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let m = small_model(3);
        let mut rng = RngStream::new(4, 0);
        let x = random_image(8, 8, &mut rng);
        let trace = m.forward(&x).unwrap();
        let (_, cot) = cross_entropy(trace.logits(), 2);
        let mut g = Gradients::zeros_like(&m);
        m.backward(&trace, &cot, Some(&mut g)).unwrap();
        for (li, (gw, _)) in g.layers.iter().enumerate() {
            for k in (0..gw.len()).step_by(7) {
                let perturbed = |delta: f64| {
                    let mut layers = m.layers().to_vec();
                    if let Layer::Conv { weights, .. } | Layer::Dense { weights, .. } = &mut layers[li] {
                        weights[k] += delta;
                    }
                    let mm = Classifier::new(m.input_shape(), layers).unwrap();
                    cross_entropy(&mm.logits(&x).unwrap(), 2).0
                };
                let fd = (perturbed(1e-6) - perturbed(-1e-6)) / 2e-6;
                assert!((fd - gw[k]).abs() <= 1e-6 + 1e-4 * fd.abs(), "layer {li} w{k}: {fd} vs {}", gw[k]);
            }
        }
    }

    #[test]
    fn batch_decomposition_invariance() {
        let m = small_model(9);
        let mut rng = RngStream::new(10, 0);
        let xs: Vec<ImageTensor> = (0..5).map(|_| random_image(8, 8, &mut rng)).collect();
        let batch = m.logits_batch(&xs).unwrap();
        for (x, z) in xs.iter().zip(&batch) {
            assert_eq!(&m.logits(x).unwrap(), z);
            let p = softmax(z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let m = small_model(1);
        assert!(matches!(m.logits(&ImageTensor::zeros(7, 8)), Err(Error::DimMismatch(_))));
        assert!(matches!(m.input_grad(&ImageTensor::zeros(8, 8), &[1.0]), Err(Error::DimMismatch(_))));
        let bad = vec![Layer::Flatten, Layer::Dense { inputs: 5, outputs: 2, weights: vec![0.0; 10], bias: vec![0.0; 2] }];
        assert!(matches!(
            Classifier::new(Shape { height: 2, width: 2, channels: 3 }, bad),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = small_model(12);
        let back = Classifier::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut rng = RngStream::new(13, 0);
        for _ in 0..10 {
            let x = random_image(8, 8, &mut rng);
            let (a, b) = (m.logits(&x).unwrap(), back.logits(&x).unwrap());
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let text = small_model(2).to_json();
        let cut = &text[..text.len() / 2];
        match Classifier::from_json(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        let wrong = text.replacen("\"inputs\": 20", "\"inputs\": 21", 1);
        assert_ne!(wrong, text);
        assert!(matches!(Classifier::from_json(&wrong), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn one_epoch_reduces_loss() {
        let ds = gen_dataset(21, 1, 16, 16);
        let mut m = Classifier::default_architecture(16, 16, 8, 4).unwrap();
        let before = mean_loss(&m, &ds).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 8, learning_rate: 0.01, ..TrainConfig::default() };
        fit(&mut m, &ds, &cfg).unwrap();
        let after = mean_loss(&m, &ds).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = gen_dataset(5, 4, 16, 16);
        let cfg = TrainConfig { epochs: 2, seed: 17, ..TrainConfig::default() };
        let (a, ra) = train(&cfg, &ds).unwrap();
        let (b, rb) = train(&cfg, &ds).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.train_size + ra.test_size, 32);
    }
}
