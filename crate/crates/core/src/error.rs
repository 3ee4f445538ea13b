use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("dimension mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("no point of the cloud lands inside the raster extent")]
    EmptyCloud,

    #[error("sparse z-image has no filled pixel")]
    EmptySparse,

    #[error("non-finite value produced at iteration {iteration} (step size too large?)")]
    NonFinite { iteration: usize },

    #[error("GVF diverged at iteration {iteration} (time step too large?)")]
    Unstable { iteration: usize },

    #[error("internal step operator is singular")]
    SingularOperator,

    #[error("normal undefined at contour point {index}")]
    DegenerateNormal { index: usize },

    #[error("snake left the raster at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("snake collapsed (area {area:.3} px^2) at iteration {iteration}")]
    Collapsed { iteration: usize, area: f64 },

    #[error("missing band: {0}")]
    MissingBand(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for errors that come from a numerical method rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Unstable { .. }
                | Error::SingularOperator
                | Error::DegenerateNormal { .. }
                | Error::Diverged { .. }
                | Error::Collapsed { .. }
        )
    }
}
