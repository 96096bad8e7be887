use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("degenerate projection: |w| = {0:e} is too close to zero")]
    DegenerateProjection(f64),
    #[error("invalid ghost ratio {0}: must be nonzero and finite")]
    InvalidRatio(f64),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("ambient illuminance must be positive, got {0}")]
    NonPositiveAmbient(f64),
    #[error("distance {0} is not in the resolution table (1..=5 m)")]
    OutOfTable(f64),
    #[error("all light-source/ghost pairs coincide with the image center")]
    DegeneratePairs,
    #[error("ghost placement out of bounds: {0}")]
    PlacementOutOfBounds(String),
    #[error("insufficient variation in fit samples: {0}")]
    InsufficientVariation(String),
    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("every flare sample has zero illuminance")]
    AllZeroIlluminance,
    #[error("invalid penalty shape: need alpha > beta > 0 (alpha = {alpha}, beta = {beta})")]
    InvalidShape { alpha: f64, beta: f64 },
    #[error("adversarial loss needs at least one sample")]
    EmptySamples,
    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize, trace: Vec<f64> },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Maps a JSON decoding error to a [`Error::Parse`] carrying the byte
    /// offset into `text`.
    pub(crate) fn json(text: &str, err: serde_json::Error) -> Self {
        let offset = match err.line() {
            0 => 0,
            line => {
                let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
                (start + err.column().saturating_sub(1)).min(text.len())
            }
        };
        Error::parse(offset, err.to_string())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::InvalidRatio(_)
                | Error::NonPositiveDistance(_)
                | Error::NonPositiveAmbient(_)
                | Error::OutOfTable(_)
                | Error::InvalidShape { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
