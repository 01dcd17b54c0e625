use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    /// A partition without any support element has its optimal weight at infinity.
    #[error("partition {partition} has no support; its optimal weight is unbounded")]
    UnboundedWeight { partition: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_finite_nonneg(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return domain(format!("{name} must be finite, got {v}"));
    }
    if v < 0.0 {
        return domain(format!("{name} must be nonnegative, got {v}"));
    }
    Ok(())
}
