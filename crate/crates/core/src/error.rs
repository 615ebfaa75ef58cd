use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants map onto the CLI exit-code classes: `Parse` is unreadable
/// input, `Config` and `Domain`
/// are invariant violations, `Regularity` is a refused profile, `Solver`
/// and `Numerical` are computation failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input text that could not be read as a scenario.
    #[error("parse error: {0}")]
    Parse(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario or distribution that violates a declared invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The virtual type is not increasing on the certification grid.
    #[error(
        "user {user}: virtual type not increasing between {theta_a} and {theta_b} \
         (regularity check on {grid_points} points); pass the override flag to run anyway"
    )]
    Regularity {
        user: usize,
        theta_a: f64,
        theta_b: f64,
        grid_points: usize,
    },

    /// An iterative solver did not reach its tolerance.
    #[error("solver failed: {0}")]
    Solver(String),

    /// A NaN or infinity appeared where a finite value was required.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("{} is {value}", what())))
    }
}
