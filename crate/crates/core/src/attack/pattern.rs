use crate::channel::Placement;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::numkit::RngStream;
use serde::{Deserialize, Serialize};

/// Block-grid ghost pattern: `rows × cols × channels` means in `[0, 1]`
/// and the Gaussian spread of each projected pixel around its block mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPattern {
    pub rows: usize,
    pub cols: usize,
    /// 1 (one gray level per block, broadcast to RGB) or 3.
    pub channels: usize,
    /// Row-major `[row][col][channel]`.
    pub mu: Vec<f64>,
    /// Shared standard deviation.
    pub sigma: f64,
    /// Optional per-channel standard deviations, overriding `sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_rgb: Option<[f64; 3]>,
}

impl GridPattern {
    pub fn filled(rows: usize, cols: usize, channels: usize, value: f64, sigma: f64) -> Result<Self> {
        let p = Self {
            rows,
            cols,
            channels,
            mu: vec![value; rows * cols * channels],
            sigma,
            sigma_rgb: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!(
                "grid channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.rows == 0 || self.cols == 0 || self.mu.len() != self.rows * self.cols * self.channels {
            return Err(Error::DimMismatch(format!(
                "grid {}x{}x{} has {} means",
                self.rows,
                self.cols,
                self.channels,
                self.mu.len()
            )));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("grid means must be finite".into()));
        }
        let sigmas = self.sigma_rgb.unwrap_or([self.sigma; 3]);
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn sigma_for(&self, channel: usize) -> f64 {
        self.sigma_rgb.map_or(self.sigma, |s| s[channel])
    }

    /// Clamps every mean to `[0, 1]`.
    pub fn project(&mut self) {
        for m in &mut self.mu {
            *m = m.clamp(0.0, 1.0);
        }
    }

    fn entry(&self, row: usize, col: usize, channel: usize) -> usize {
        let c = if self.channels == 1 { 0 } else { channel };
        (row * self.cols + col) * self.channels + c
    }

    fn check_target(&self, width: usize, height: usize) -> Result<()> {
        if width == 0 || height == 0 || width % self.cols != 0 || height % self.rows != 0 {
            return Err(Error::DimMismatch(format!(
                "{width}x{height} target is not divisible into {}x{} blocks",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Block means rendered at `width × height` (no noise).
    pub fn render_means(&self, width: usize, height: usize) -> Result<ImageTensor> {
        let mut plain = self.clone();
        plain.sigma = 0.0;
        plain.sigma_rgb = None;
        Ok(sample_pattern(&plain, width, height, &mut RngStream::new(0, 0))?.image)
    }

    /// Pattern sized for a ghost placement.
    pub fn for_placement(placement: &Placement, channels: usize, value: f64, sigma: f64) -> Result<Self> {
        Self::filled(placement.rows, placement.cols, channels, value, sigma)
    }
}

/// One random draw of a pattern together with its clamp mask.
#[derive(Debug, Clone)]
pub struct PatternSample {
    pub image: ImageTensor,
    /// True where `μ + σε` fell inside `[0, 1]`.
    inside: Vec<bool>,
    rows: usize,
    cols: usize,
    channels: usize,
}

impl PatternSample {
    /// Pulls a pixel-level gradient back onto the block means, adding into
    /// `grad_mu`. Clamped pixels contribute nothing.
    pub fn accumulate_mu_grad(&self, grad_pixels: &ImageTensor, grad_mu: &mut [f64]) -> Result<()> {
        if !grad_pixels.same_dims(&self.image) || grad_mu.len() != self.rows * self.cols * self.channels {
            return Err(Error::DimMismatch("pattern gradient shape mismatch".into()));
        }
        let (w, h) = (self.image.width(), self.image.height());
        let (bw, bh) = (w / self.cols, h / self.rows);
        for y in 0..h {
            for x in 0..w {
                let block = (y / bh) * self.cols + x / bw;
                for c in 0..3 {
                    let i = (y * w + x) * 3 + c;
                    if self.inside[i] {
                        let k = block * self.channels + if self.channels == 1 { 0 } else { c };
                        grad_mu[k] += grad_pixels.data()[i];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Draws `Δ = clamp(μ + σε)` with every block upsampled to cover its share
/// of a `width × height` target.
pub fn sample_pattern(pattern: &GridPattern, width: usize, height: usize, stream: &mut RngStream) -> Result<PatternSample> {
    pattern.validate()?;
    pattern.check_target(width, height)?;
    let (bw, bh) = (width / pattern.cols, height / pattern.rows);
    let mut image = ImageTensor::zeros(width, height);
    let mut inside = vec![true; width * height * 3];
    let data = image.data_mut();
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let mu = pattern.mu[pattern.entry(y / bh, x / bw, c)];
                let sigma = pattern.sigma_for(c);
                let v = if sigma > 0.0 { mu + sigma * stream.normal() } else { mu };
                let i = (y * width + x) * 3 + c;
                inside[i] = (0.0..=1.0).contains(&v);
                data[i] = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(PatternSample {
        image,
        inside,
        rows: pattern.rows,
        cols: pattern.cols,
        channels: pattern.channels,
    })
}
