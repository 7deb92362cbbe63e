use thiserror::Error;

/// Unified error type for model construction, spectral analysis, invariant
/// evaluation, localization fits and harness plumbing.
#[derive(Error, Debug)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("magnetic flux error: {0}")]
    Flux(String),
    #[error("spectral error: {0}")]
    Spectral(String),
    #[error("invariant error: {0}")]
    Invariant(String),
    #[error("localization error: {0}")]
    Localization(String),
    #[error("linear algebra backend: {0}")]
    Backend(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
