use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate scale: median absolute deviation is zero")]
    DegenerateScale,

    #[error("ill-conditioned scatter: eigenvalue ratio {ratio:.3e} below {threshold:.1e}")]
    Conditioning { ratio: f64, threshold: f64 },

    #[error("exact fit: every elemental subset produced a singular scatter")]
    ExactFit,

    #[error("objective returned {value} at point {point:?}")]
    Objective { point: Vec<f64>, value: f64 },

    #[error("generation error: {0}")]
    Generation(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::ExactFit
                | Error::Objective { .. }
                | Error::Generation(_)
        )
    }
}
