use thiserror::Error;

/// Crate-wide error type.
///
/// Variants separate caller mistakes (`Config`), malformed or inconsistent
/// input data (`Data`) and numeric/runtime failures (`Model`, `Metric`), so
/// the CLI can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("model: {0}")]
    Model(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("graph: {0}")]
    Graph(#[from] tapegrad::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    pub fn metric(msg: impl Into<String>) -> Self {
        Error::Metric(msg.into())
    }

    /// True for errors caused by how the tool was invoked rather than by the
    /// data or the computation; the CLI reports these with usage exit status.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
