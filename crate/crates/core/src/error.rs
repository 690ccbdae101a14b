use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate point: {0}")]
    DegeneratePoint(String),

    #[error("argument outside numerical domain: {0}")]
    NumericalDomain(String),

    #[error("degenerate metric at node {node}")]
    DegenerateMetric { node: usize },

    #[error("pinching hypothesis fails at node {node}: a|H|^2 + beta_eps c = {denominator}")]
    PinchingViolation { node: usize, denominator: f64 },

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("monitor invalid: {0}")]
    MonitorInvalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
