use thiserror::Error;

use crate::dataset::DatasetError;
use crate::decompose::DecomposeError;
use crate::diagnostics::DiagnosticsError;
use crate::marginal::MarginalError;
use crate::sampler::SamplerError;

/// Top-level error; each variant names the module that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("sampler: {0}")]
    Sampler(#[from] SamplerError),
    #[error("marginal: {0}")]
    Marginal(#[from] MarginalError),
    #[error("decompose: {0}")]
    Decompose(#[from] DecomposeError),
    #[error("diagnostics: {0}")]
    Diagnostics(#[from] DiagnosticsError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short module tag used in machine-readable error records.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Dataset(_) => "dataset",
            Error::Sampler(_) => "sampler",
            Error::Marginal(_) => "marginal",
            Error::Decompose(_) => "decompose",
            Error::Diagnostics(_) => "diagnostics",
            Error::Config(_) => "cli",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
