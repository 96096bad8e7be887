//! Small numerical substrate: dense row-major matrices, LU solves, least
//! squares, a symmetric eigen-solver, and a counter-based Gaussian RNG.
//!
//! Everything is `f64`. Matrices here are tiny (at most a few hundred rows and
//! a dozen columns), so the routines favour readability over blocking.

mod matrix;
mod rng;

pub use matrix::{lstsq, symmetric_eigen, Matrix, PIVOT_TOLERANCE};
pub use rng::{randn, RngStream};

/// Logistic function `1 / (1 + e^-t)`.
///
/// Evaluated in the numerically safe branch for either sign of `t`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
