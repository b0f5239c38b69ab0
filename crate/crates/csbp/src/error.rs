use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("Grey's condition is indeterminate (tail slope {slope:.4})")]
    Indeterminate { slope: f64 },

    #[error("offspring law truncated at K = {k_max} leaves tail mass {tail:.3e}")]
    TruncatedOffspring { k_max: usize, tail: f64 },

    #[error("ODE step size underflow at t = {t:.6e} (h = {h:.3e}, y0 = {y0:.6e})")]
    StepUnderflow { t: f64, h: f64, y0: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::StepUnderflow { .. } | Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
