//! Linear-intensity RGB images shared by the channel, classifier and attack.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// `width × height × 3` image, row-major with interleaved channels.
///
/// Values are linear intensities, nominally in `[0, 1]`; intermediate results
/// (pre-clip emulator output) may leave that range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = Self::zeros(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimMismatch(format!(
                "{width}x{height}x3 image needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * 3 + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = self.index(x, y, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = self.index(x, y, 0);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &ImageTensor) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// 8-bit quantization `round(255·v)/255` after clamping to `[0, 1]`.
    pub fn quantize_8bit(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    /// Clamped 8-bit samples, one byte per channel.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// SHA-256 of the 8-bit rendering, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        hasher.update(self.to_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0.0; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                sums[c] += px[c];
            }
        }
        let n = (self.width * self.height).max(1) as f64;
        sums.map(|s| s / n)
    }
}
