use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension contract violated (wrong panel count, size mismatch, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// A scene could not be rendered.
    #[error("rasterization error: {0}")]
    Raster(String),

    /// Generator constraints could not be satisfied.
    #[error("generation error: {0}")]
    Generation(String),

    /// Invalid or incomplete configuration (missing model, bad parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// Malformed on-disk data (corpus, panel, checkpoint).
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
