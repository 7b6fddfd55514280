use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid mesh bounds, parameters or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A kernel or profile was evaluated outside of its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance: estimated error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// Arguments that must share a mesh (or be nested) do not.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("time integration diverged at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("negative value {value:.3e} in cell {cell} at step {step} (t = {t}); reduce dt")]
    StepSize {
        step: usize,
        t: f64,
        cell: usize,
        value: f64,
    },

    /// A quantity (error norm, EOC) is not defined for the given inputs.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("no analytic solution available for {0}")]
    NotAvailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
