use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("well depth error: {0}")]
    Depth(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("eigensolver failed to converge: {0}")]
    Convergence(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("step size collapsed at t = {t}: h = {h:e}")]
    StiffnessFailure { t: f64, h: f64 },

    #[error("state invariant violated at t = {t}: {what}")]
    InvariantViolation { t: f64, what: String },

    #[error("no steady state reached before t = {t_max}")]
    NoConvergence { t_max: f64 },

    #[error("step budget of {steps} exhausted at t = {t}")]
    StepLimit { t: f64, steps: usize },

    #[error("photon density is identically zero")]
    EmptyProfile,

    #[error("transport blocked at site {site}: nu[{site}] = {nu_site} >= nu[{next}] = {nu_next}")]
    TransportBlocked {
        site: usize,
        next: usize,
        nu_site: f64,
        nu_next: f64,
    },

    #[error("pump rate is zero; the pumped site never clamps")]
    ZeroPump,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
