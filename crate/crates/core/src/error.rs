use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected} states, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A w^{-1}-weighted sum whose summand does not decay at the truncation bound.
    #[error("weighted norm diverges: summand at x = {x} is {relative:.3e} of the running total")]
    Divergence { x: usize, relative: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("boundary mass {mass:.3e} at t = {t} exceeds the truncation limit")]
    BoundaryMass { t: f64, mass: f64 },

    #[error("reference value below the division guard at t = {t}")]
    DivisionGuard { t: f64 },

    #[error("no rate bound available for thinning: {0}")]
    RateBound(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver at order N = {order} failed: {source}")]
    AtOrder {
        order: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
