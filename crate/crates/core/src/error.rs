use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Messages are prefixed with the module that raised them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spectra: {0}")]
    Spectra(String),

    #[error("paths: line {line}: {message}")]
    PathParse { line: usize, message: String },

    #[error("paths: {0}")]
    Paths(String),

    #[error("model: {0}")]
    Model(String),

    #[error("fitness: {0}")]
    Fitness(String),

    #[error("ga: {0}")]
    Config(String),

    #[error("ga: generation {generation}, individual {individual}: {source}")]
    Evaluation {
        generation: usize,
        individual: usize,
        source: Box<Error>,
    },

    #[error("analysis: {0}")]
    Analysis(String),
}

impl Error {
    pub(crate) fn spectra(msg: impl Into<String>) -> Self {
        Error::Spectra(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    pub(crate) fn fitness(msg: impl Into<String>) -> Self {
        Error::Fitness(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::PathParse {
            line,
            message: msg.into(),
        }
    }
}
