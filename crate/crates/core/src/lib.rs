//! Emulation and optimization of projector-induced lens-flare ("ghost")
//! attacks on camera-based image classifiers.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: matrices, least squares, counter-based Gaussian RNG.
//! - [`geometry`]: ghost placement and achievable pattern resolution.
//! - [`channel`]: projector→camera channel (illuminance, auto-exposure,
//!   color calibration, flare gain) and its parameter fits.
//! - [`classifier`]: a small differentiable CNN and a synthetic sign dataset.
//! - [`attack`]: grid patterns, biased penalty, Monte-Carlo adversarial loss,
//!   projected Adam, and the attack driver.
//! - [`harness`]: configuration, PPM/CSV/JSON I/O, evaluation loops and CLI.

pub mod attack;
pub mod channel;
pub mod classifier;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod numkit;

pub use error::{Error, Result};
pub use image::ImageTensor;
