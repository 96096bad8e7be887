use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::numkit::RngStream;
use serde::{Deserialize, Serialize};

/// Activation shape, `height × width × channels`, stored HWC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One network layer.
///
/// Convolutions are unpadded. Conv weights are laid out
/// `[kernel_row][kernel_col][in_channel][out_channel]`; dense weights are
/// `[output][input]`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Flatten,
}

impl Layer {
    /// He-uniform initialized convolution.
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut RngStream) -> Self {
        let fan_in = (kernel * kernel * in_channels) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let n = kernel * kernel * in_channels * out_channels;
        Layer::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            weights: (0..n).map(|_| rng.uniform(-limit, limit)).collect(),
            bias: vec![0.0; out_channels],
        }
    }

    /// He-uniform initialized dense layer.
    pub fn dense(inputs: usize, outputs: usize, rng: &mut RngStream) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        Layer::Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.uniform(-limit, limit)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                weights.len() + bias.len()
            }
            _ => 0,
        }
    }

    fn output_shape(&self, s: Shape, index: usize) -> Result<Shape> {
        let mismatch = |msg: String| Error::DimMismatch(format!("layer {index}: {msg}"));
        match self {
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                weights,
                bias,
            } => {
                if s.channels != *in_channels {
                    return Err(mismatch(format!(
                        "conv expects {in_channels} channels, input has {}",
                        s.channels
                    )));
                }
                if *kernel == 0 || *stride == 0 || s.height < *kernel || s.width < *kernel {
                    return Err(mismatch(format!(
                        "kernel {kernel} stride {stride} does not fit {}x{}",
                        s.height, s.width
                    )));
                }
                if weights.len() != kernel * kernel * in_channels * out_channels
                    || bias.len() != *out_channels
                {
                    return Err(mismatch("conv parameter count does not match its shape".into()));
                }
                Ok(Shape {
                    height: (s.height - kernel) / stride + 1,
                    width: (s.width - kernel) / stride + 1,
                    channels: *out_channels,
                })
            }
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                if s.len() != *inputs {
                    return Err(mismatch(format!(
                        "dense expects {inputs} inputs, got {}",
                        s.len()
                    )));
                }
                if weights.len() != inputs * outputs || bias.len() != *outputs {
                    return Err(mismatch("dense parameter count does not match its shape".into()));
                }
                Ok(Shape {
                    height: 1,
                    width: 1,
                    channels: *outputs,
                })
            }
            Layer::Relu => Ok(s),
            Layer::MaxPool { size } => {
                if *size == 0 || s.height < *size || s.width < *size {
                    return Err(mismatch(format!("pool size {size} does not fit")));
                }
                Ok(Shape {
                    height: s.height / size,
                    width: s.width / size,
                    channels: s.channels,
                })
            }
            Layer::Flatten => Ok(Shape {
                height: 1,
                width: 1,
                channels: s.len(),
            }),
        }
    }

    fn param_slices_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                Some((weights.as_mut_slice(), bias.as_mut_slice()))
            }
            _ => None,
        }
    }
}

/// Parameter gradients, one `(weights, bias)` pair per layer (empty for
/// parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(model: &Classifier) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    (vec![0.0; weights.len()], vec![0.0; bias.len()])
                }
                _ => (Vec::new(), Vec::new()),
            })
            .collect();
        Self { layers }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, o) in w.iter_mut().zip(ow) {
                *a += o;
            }
            for (a, o) in b.iter_mut().zip(ob) {
                *a += o;
            }
        }
    }

    /// Global L2 norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v *= s;
            }
        }
    }
}

/// Layered image classifier producing `classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    input: Shape,
    classes: usize,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    class_names: Vec<String>,
}

/// Activations recorded by [`Classifier::forward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[i]` is the input of layer `i`; the last entry is the
    /// logits.
    activations: Vec<Vec<f64>>,
    /// Argmax input offsets for each max-pool layer output.
    pool_index: Vec<Vec<usize>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }

    /// Smallest `|pre-activation|` seen by any ReLU, for kink detection.
    pub fn min_relu_margin(&self, model: &Classifier) -> f64 {
        model
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .flat_map(|(i, _)| self.activations[i].iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// ReLU on/off pattern and max-pool winners, for kink detection.
    pub fn kink_signature(&self, model: &Classifier) -> (Vec<bool>, Vec<usize>) {
        let mask = model
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .flat_map(|(i, _)| self.activations[i].iter().map(|v| *v > 0.0))
            .collect();
        (mask, self.pool_index.concat())
    }
}

impl Classifier {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = vec![input];
        let mut s = input;
        for (i, l) in layers.iter().enumerate() {
            s = l.output_shape(s, i)?;
            shapes.push(s);
        }
        if s.height != 1 || s.width != 1 {
            return Err(Error::DimMismatch(format!(
                "final layer must output a logit vector, got {}x{}x{}",
                s.height, s.width, s.channels
            )));
        }
        let finite = layers.iter().all(|l| match l {
            Layer::Conv { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                weights.iter().chain(bias).all(|v| v.is_finite())
            }
            _ => true,
        });
        if !finite {
            return Err(Error::Config("network weights must be finite".into()));
        }
        Ok(Self {
            input,
            classes: s.channels,
            layers,
            shapes,
            class_names: (0..s.channels).map(|i| format!("class{i}")).collect(),
        })
    }

    /// Default architecture for `width × height` RGB inputs: two strided
    /// convolutions (16 5×5 filters and 32 3×3 filters, stride 2) and two
    /// dense layers (64 hidden units).
    pub fn default_architecture(width: usize, height: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed, 0x1417);
        let input = Shape {
            height,
            width,
            channels: 3,
        };
        let c1 = Shape {
            height: (height.saturating_sub(5)) / 2 + 1,
            width: (width.saturating_sub(5)) / 2 + 1,
            channels: 16,
        };
        let c2 = Shape {
            height: (c1.height.saturating_sub(3)) / 2 + 1,
            width: (c1.width.saturating_sub(3)) / 2 + 1,
            channels: 32,
        };
        let layers = vec![
            Layer::conv(3, 16, 5, 2, &mut rng),
            Layer::Relu,
            Layer::conv(16, 32, 3, 2, &mut rng),
            Layer::Relu,
            Layer::Flatten,
            Layer::dense(c2.len(), 64, &mut rng),
            Layer::Relu,
            Layer::dense(64, classes, &mut rng),
        ];
        Self::new(input, layers)
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.classes {
            return Err(Error::DimMismatch(format!(
                "{} class names for {} classes",
                names.len(),
                self.classes
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_input(&self, x: &ImageTensor) -> Result<()> {
        if x.width() != self.input.width || x.height() != self.input.height || self.input.channels != 3 {
            return Err(Error::DimMismatch(format!(
                "model expects {}x{}x{}, image is {}x{}x3",
                self.input.width,
                self.input.height,
                self.input.channels,
                x.width(),
                x.height()
            )));
        }
        Ok(())
    }

    /// Forward pass on a raw HWC buffer of the input shape.
    pub fn forward_raw(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input.len(), "input buffer has the wrong length");
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_index = Vec::new();
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let inp = &activations[i];
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            let out = match layer {
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    weights,
                    bias,
                } => {
                    let (ic, oc, k) = (*in_channels, *out_channels, *kernel);
                    let mut out = vec![0.0; so.len()];
                    for oy in 0..so.height {
                        for ox in 0..so.width {
                            let o = &mut out[(oy * so.width + ox) * oc..][..oc];
                            o.copy_from_slice(bias);
                            for ky in 0..k {
                                let iy = oy * stride + ky;
                                for kx in 0..k {
                                    let ix = ox * stride + kx;
                                    let src = &inp[(iy * si.width + ix) * ic..][..ic];
                                    let w = &weights[(ky * k + kx) * ic * oc..][..ic * oc];
                                    for (c, &v) in src.iter().enumerate() {
                                        if v == 0.0 {
                                            continue;
                                        }
                                        for (acc, wv) in o.iter_mut().zip(&w[c * oc..(c + 1) * oc]) {
                                            *acc += v * wv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    out
                }
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => (0..*outputs)
                    .map(|o| {
                        bias[o]
                            + weights[o * inputs..(o + 1) * inputs]
                                .iter()
                                .zip(inp)
                                .map(|(w, v)| w * v)
                                .sum::<f64>()
                    })
                    .collect(),
                Layer::Relu => inp.iter().map(|v| v.max(0.0)).collect(),
                Layer::MaxPool { size } => {
                    let mut out = vec![0.0; so.len()];
                    let mut idx = vec![0; so.len()];
                    for oy in 0..so.height {
                        for ox in 0..so.width {
                            for c in 0..so.channels {
                                let mut best = (f64::NEG_INFINITY, 0);
                                for py in 0..*size {
                                    for px in 0..*size {
                                        let j = ((oy * size + py) * si.width + ox * size + px) * si.channels + c;
                                        if inp[j] > best.0 {
                                            best = (inp[j], j);
                                        }
                                    }
                                }
                                let o = (oy * so.width + ox) * so.channels + c;
                                out[o] = best.0;
                                idx[o] = best.1;
                            }
                        }
                    }
                    pool_index.push(idx);
                    out
                }
                Layer::Flatten => inp.clone(),
            };
            activations.push(out);
        }
        Trace {
            activations,
            pool_index,
        }
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<Trace> {
        self.check_input(x)?;
        Ok(self.forward_raw(x.data()))
    }

    /// Logits `Z(x)`.
    pub fn logits(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits().to_vec())
    }

    pub fn logits_batch(&self, xs: &[ImageTensor]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.logits(x)).collect()
    }

    pub fn predict(&self, x: &ImageTensor) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Reverse pass from a logit cotangent. Accumulates parameter gradients
    /// into `grads` when given; returns the input gradient.
    pub fn backward(&self, trace: &Trace, cotangent: &[f64], mut grads: Option<&mut Gradients>) -> Result<Vec<f64>> {
        if cotangent.len() != self.classes {
            return Err(Error::DimMismatch(format!(
                "cotangent has {} entries for {} classes",
                cotangent.len(),
                self.classes
            )));
        }
        let mut upstream = cotangent.to_vec();
        let mut pool_layer = trace.pool_index.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let inp = &trace.activations[i];
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            let mut down = vec![0.0; si.len()];
            match layer {
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    weights,
                    ..
                } => {
                    let (ic, oc, k) = (*in_channels, *out_channels, *kernel);
                    let mut pg = grads.as_deref_mut().map(|g| &mut g.layers[i]);
                    for oy in 0..so.height {
                        for ox in 0..so.width {
                            let go = &upstream[(oy * so.width + ox) * oc..][..oc];
                            if let Some((_, gb)) = pg.as_deref_mut() {
                                for (b, g) in gb.iter_mut().zip(go) {
                                    *b += g;
                                }
                            }
                            for ky in 0..k {
                                let iy = oy * stride + ky;
                                for kx in 0..k {
                                    let ix = ox * stride + kx;
                                    let base = (iy * si.width + ix) * ic;
                                    let woff = (ky * k + kx) * ic * oc;
                                    for c in 0..ic {
                                        let w = &weights[woff + c * oc..][..oc];
                                        down[base + c] += w.iter().zip(go).map(|(a, b)| a * b).sum::<f64>();
                                        if let Some((gw, _)) = pg.as_deref_mut() {
                                            let v = inp[base + c];
                                            if v != 0.0 {
                                                for (acc, g) in gw[woff + c * oc..][..oc].iter_mut().zip(go) {
                                                    *acc += v * g;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    ..
                } => {
                    for o in 0..*outputs {
                        let g = upstream[o];
                        if g == 0.0 {
                            continue;
                        }
                        let w = &weights[o * inputs..(o + 1) * inputs];
                        for (d, wv) in down.iter_mut().zip(w) {
                            *d += g * wv;
                        }
                    }
                    if let Some(gr) = grads.as_deref_mut() {
                        let (gw, gb) = &mut gr.layers[i];
                        for o in 0..*outputs {
                            let g = upstream[o];
                            gb[o] += g;
                            if g == 0.0 {
                                continue;
                            }
                            for (acc, v) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(inp) {
                                *acc += g * v;
                            }
                        }
                    }
                }
                Layer::Relu => {
                    for ((d, u), v) in down.iter_mut().zip(&upstream).zip(inp) {
                        if *v > 0.0 {
                            *d = *u;
                        }
                    }
                }
                Layer::MaxPool { .. } => {
                    pool_layer -= 1;
                    for (o, &j) in trace.pool_index[pool_layer].iter().enumerate() {
                        down[j] += upstream[o];
                    }
                }
                Layer::Flatten => down.copy_from_slice(&upstream),
            }
            upstream = down;
        }
        Ok(upstream)
    }

    /// `∂(cotangent · Z(x))/∂x`.
    pub fn input_grad(&self, x: &ImageTensor, cotangent: &[f64]) -> Result<ImageTensor> {
        let trace = self.forward(x)?;
        let g = self.backward(&trace, cotangent, None)?;
        ImageTensor::from_data(x.width(), x.height(), g)
    }

    /// `θ ← θ − lr · step` for every parameter.
    pub(crate) fn apply_update(&mut self, step: &Gradients, lr: f64) {
        for (layer, (sw, sb)) in self.layers.iter_mut().zip(&step.layers) {
            if let Some((w, b)) = layer.param_slices_mut() {
                for (p, s) in w.iter_mut().zip(sw) {
                    *p -= lr * s;
                }
                for (p, s) in b.iter_mut().zip(sb) {
                    *p -= lr * s;
                }
            }
        }
    }
}

/// First index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
