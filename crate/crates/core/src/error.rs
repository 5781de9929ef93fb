//! Crate-wide error type. Variants map onto the CLI exit codes: config
//! errors exit 1, pipeline errors exit 2, golden mismatches exit 3.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("degenerate critical orbit: {0}")]
    Degenerate(String),

    #[error("stabilization error: {0}")]
    Stabilize(String),

    #[error("flow error: {0}")]
    Flow(String),

    #[error("near-degenerate orientation: {0}")]
    Orientation(String),

    #[error("cover extraction unstable: {0}")]
    CoverUnstable(String),

    #[error("cochain assembly error: {0}")]
    Assembly(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("golden mismatch:\n{0}")]
    GoldenMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::GoldenMismatch(_) => 3,
            _ => 2,
        }
    }
}
