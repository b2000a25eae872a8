use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A closed form was evaluated outside the region where it is defined
    /// (negative radicand, nonpositive log argument, ...).
    #[error("out of domain: {what} = {value}")]
    OutOfDomain { what: &'static str, value: f64 },

    #[error("non-finite {what} at {at}: {value}")]
    NonFinite { what: &'static str, at: f64, value: f64 },

    #[error("ordering violated: {0}")]
    Ordering(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
}

impl Error {
    /// True for errors caused by parameters leaving the evaluable region.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::OutOfDomain { .. } | Error::NonFinite { .. } | Error::Ordering(_) | Error::Singular(_))
    }
}
