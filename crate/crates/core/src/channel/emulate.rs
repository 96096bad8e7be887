use super::{max_channel, ChannelParams, BLACK_EPSILON};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::numkit::sigmoid;
use serde::{Deserialize, Serialize};

/// How the auto-exposure dimming ratio is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureMode {
    /// Each ghost pixel is dimmed by its own illuminance; pixels outside the
    /// ghost receive no projector light and are not dimmed.
    #[default]
    PerPixel,
    /// One ratio for the whole frame from the brightest ghost pixel.
    GlobalMax,
    /// One ratio for the whole frame from the mean ghost illuminance.
    GlobalMean,
}

/// How the backward pass treats the final `[0, 1]` clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipGradient {
    /// Pass gradients through the clamp unchanged.
    #[default]
    StraightThrough,
    /// Zero the gradient wherever the clamp was active.
    Exact,
}

/// Ghost rectangle inside the target image and its block grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Placement {
    /// Largest centered `side × side`-block rectangle that fits the image.
    pub fn centered(image_width: usize, image_height: usize, side: usize) -> Result<Self> {
        if side == 0 || side > image_width || side > image_height {
            return Err(Error::PlacementOutOfBounds(format!(
                "grid side {side} does not fit a {image_width}x{image_height} image"
            )));
        }
        let width = image_width / side * side;
        let height = image_height / side * side;
        Ok(Self {
            x: (image_width - width) / 2,
            y: (image_height - height) / 2,
            width,
            height,
            rows: side,
            cols: side,
        })
    }

    pub fn validate(&self, image_width: usize, image_height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::PlacementOutOfBounds("empty ghost rectangle".into()));
        }
        if self.x + self.width > image_width || self.y + self.height > image_height {
            return Err(Error::PlacementOutOfBounds(format!(
                "rectangle ({}, {}) {}x{} exceeds {image_width}x{image_height} image",
                self.x, self.y, self.width, self.height
            )));
        }
        if self.rows == 0
            || self.cols == 0
            || self.width % self.cols != 0
            || self.height % self.rows != 0
        {
            return Err(Error::PlacementOutOfBounds(format!(
                "{}x{} rectangle is not divisible into {}x{} blocks",
                self.width, self.height, self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn block_width(&self) -> usize {
        self.width / self.cols
    }

    pub fn block_height(&self) -> usize {
        self.height / self.rows
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

#[derive(Debug, Clone)]
struct GhostPixel {
    /// `‖δ‖∞` and its first argmax channel.
    drive: f64,
    argmax: usize,
    black: bool,
    illuminance: f64,
    /// `dI/dT_d`.
    illuminance_slope: f64,
    /// `H_c·δ/‖δ‖∞` (zero when black).
    chroma: [f64; 3],
}

/// Forward pass of [`emulate`] with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct EmulationTape {
    placement: Placement,
    mode: ExposureMode,
    rho: f64,
    i_env: f64,
    color_matrix: [[f64; 3]; 3],
    background: ImageTensor,
    ghost: Vec<GhostPixel>,
    /// Frame-wide dimming ratio (global modes) or 1.
    frame_gamma: f64,
    /// Index of the ghost pixel that set the frame ratio in `GlobalMax`.
    brightest: usize,
    pre_clip: ImageTensor,
}

fn check_inputs(
    pattern: Option<&ImageTensor>,
    background: &ImageTensor,
    placement: &Placement,
) -> Result<()> {
    placement.validate(background.width(), background.height())?;
    if let Some(p) = pattern {
        if p.width() != placement.width || p.height() != placement.height {
            return Err(Error::DimMismatch(format!(
                "pattern is {}x{} but the ghost rectangle is {}x{}",
                p.width(),
                p.height(),
                placement.width,
                placement.height
            )));
        }
    }
    Ok(())
}

/// Runs the channel model and records intermediates for [`EmulationTape::backward`].
///
/// `pattern = None` means the projector is off: the output equals `x`.
pub fn emulate_forward(
    pattern: Option<&ImageTensor>,
    background: &ImageTensor,
    placement: &Placement,
    params: &ChannelParams,
    mode: ExposureMode,
) -> Result<EmulationTape> {
    check_inputs(pattern, background, placement)?;
    params.validate()?;
    let h = &params.color_matrix;
    let color_matrix = [
        [h[(0, 0)], h[(0, 1)], h[(0, 2)]],
        [h[(1, 0)], h[(1, 1)], h[(1, 2)]],
        [h[(2, 0)], h[(2, 1)], h[(2, 2)]],
    ];
    let mut tape = EmulationTape {
        placement: *placement,
        mode,
        rho: params.rho,
        i_env: params.i_env,
        color_matrix,
        background: background.clone(),
        ghost: Vec::new(),
        frame_gamma: 1.0,
        brightest: 0,
        pre_clip: background.clone(),
    };
    let Some(pattern) = pattern else {
        return Ok(tape);
    };

    let scale = params.illuminance_scale();
    tape.ghost = pattern
        .data()
        .chunks_exact(3)
        .map(|delta| {
            let (drive, argmax) = max_channel(delta);
            let s = sigmoid(params.logit(drive));
            let black = drive < BLACK_EPSILON;
            let chroma = if black {
                [0.0; 3]
            } else {
                let d = [delta[0] / drive, delta[1] / drive, delta[2] / drive];
                color_matrix.map(|row| row[0] * d[0] + row[1] * d[1] + row[2] * d[2])
            };
            GhostPixel {
                drive,
                argmax,
                black,
                illuminance: scale * s,
                illuminance_slope: scale * params.a * s * (1.0 - s),
                chroma,
            }
        })
        .collect();

    match mode {
        ExposureMode::PerPixel => {}
        ExposureMode::GlobalMax => {
            let (idx, i) = tape
                .ghost
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, g)| {
                    if g.illuminance > best.1 {
                        (k, g.illuminance)
                    } else {
                        best
                    }
                });
            tape.brightest = idx;
            tape.frame_gamma = tape.i_env / (i + tape.i_env);
        }
        ExposureMode::GlobalMean => {
            let mean =
                tape.ghost.iter().map(|g| g.illuminance).sum::<f64>() / tape.ghost.len() as f64;
            tape.frame_gamma = tape.i_env / (mean + tape.i_env);
        }
    }

    let out = tape.pre_clip.data_mut();
    if mode != ExposureMode::PerPixel {
        for v in out.iter_mut() {
            *v *= tape.frame_gamma;
        }
    }
    for (k, g) in tape.ghost.iter().enumerate() {
        let px = placement.x + k % placement.width;
        let py = placement.y + k / placement.width;
        let base = (py * background.width() + px) * 3;
        let gamma = match mode {
            ExposureMode::PerPixel => tape.i_env / (g.illuminance + tape.i_env),
            _ => tape.frame_gamma,
        };
        for c in 0..3 {
            let x = background.data()[base + c];
            out[base + c] = gamma * (tape.rho * g.illuminance * g.chroma[c] + x);
        }
    }
    Ok(tape)
}

impl EmulationTape {
    /// Output before the `[0, 1]` clamp.
    pub fn pre_clip(&self) -> &ImageTensor {
        &self.pre_clip
    }

    /// Clamped output.
    pub fn output(&self) -> ImageTensor {
        let mut y = self.pre_clip.clone();
        y.clamp_unit();
        y
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    /// Vector–Jacobian product: gradient with respect to the projected
    /// pattern given the gradient with respect to the clamped output.
    pub fn backward(&self, grad_output: &ImageTensor, clip: ClipGradient) -> Result<ImageTensor> {
        if !grad_output.same_dims(&self.pre_clip) {
            return Err(Error::DimMismatch(
                "output gradient does not match the emulated image".into(),
            ));
        }
        let p = &self.placement;
        let mut grad_pattern = ImageTensor::zeros(p.width, p.height);
        if self.ghost.is_empty() {
            return Ok(grad_pattern);
        }
        let width = self.pre_clip.width();
        let mut g = grad_output.data().to_vec();
        if clip == ClipGradient::Exact {
            for (gi, y) in g.iter_mut().zip(self.pre_clip.data()) {
                if !(0.0..=1.0).contains(y) {
                    *gi = 0.0;
                }
            }
        }
        let h = &self.color_matrix;
        let env = self.i_env;
        let x = self.background.data();

        // Frame-ratio sensitivity dL/dγ for the global modes.
        let dl_dgamma = if self.mode == ExposureMode::PerPixel {
            0.0
        } else {
            let mut acc: f64 = g.iter().zip(x).map(|(gi, xi)| gi * xi).sum();
            for (k, gp) in self.ghost.iter().enumerate() {
                let base = ((p.y + k / p.width) * width + p.x + k % p.width) * 3;
                for c in 0..3 {
                    acc += g[base + c] * self.rho * gp.illuminance * gp.chroma[c];
                }
            }
            acc
        };
        let gamma_prime = -self.frame_gamma * self.frame_gamma / env;
        let n_ghost = self.ghost.len() as f64;

        for (k, gp) in self.ghost.iter().enumerate() {
            let base = ((p.y + k / p.width) * width + p.x + k % p.width) * 3;
            let gy = [g[base], g[base + 1], g[base + 2]];
            let xp = [x[base], x[base + 1], x[base + 2]];
            let i = gp.illuminance;
            let gamma = match self.mode {
                ExposureMode::PerPixel => env / (i + env),
                _ => self.frame_gamma,
            };
            let mut grad = [0.0; 3];

            // Sensitivity to this pixel's illuminance.
            let mut dl_di: f64 = (0..3).map(|c| gy[c] * gamma * self.rho * gp.chroma[c]).sum();
            match self.mode {
                ExposureMode::PerPixel => {
                    let dgamma = -gamma * gamma / env;
                    dl_di += (0..3)
                        .map(|c| gy[c] * dgamma * (self.rho * i * gp.chroma[c] + xp[c]))
                        .sum::<f64>();
                }
                ExposureMode::GlobalMean => dl_di += dl_dgamma * gamma_prime / n_ghost,
                ExposureMode::GlobalMax => {
                    if k == self.brightest {
                        dl_di += dl_dgamma * gamma_prime;
                    }
                }
            }
            grad[gp.argmax] += dl_di * gp.illuminance_slope;

            if !gp.black {
                // Chroma term: u = H δ / m with m = δ[argmax].
                let scale = gamma * self.rho * i / gp.drive;
                let mut g_dot_u = 0.0;
                for c in 0..3 {
                    g_dot_u += gy[c] * gp.chroma[c];
                }
                for (kk, gk) in grad.iter_mut().enumerate() {
                    let ht_g: f64 = (0..3).map(|c| h[c][kk] * gy[c]).sum();
                    *gk += scale * ht_g;
                }
                grad[gp.argmax] -= scale * g_dot_u;
            }
            let dst = k * 3;
            grad_pattern.data_mut()[dst..dst + 3].copy_from_slice(&grad);
        }
        Ok(grad_pattern)
    }
}

/// Perceived image for projector input `pattern` over background `x`.
///
/// Output is clamped to `[0, 1]`, and additionally rounded to 8-bit levels
/// when `quantize` is set.
pub fn emulate(
    pattern: Option<&ImageTensor>,
    background: &ImageTensor,
    placement: &Placement,
    params: &ChannelParams,
    mode: ExposureMode,
    quantize: bool,
) -> Result<ImageTensor> {
    let mut y = emulate_forward(pattern, background, placement, params, mode)?.output();
    if quantize {
        y.quantize_8bit();
    }
    Ok(y)
}
