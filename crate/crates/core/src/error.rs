use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Expression text does not match the grammar.
    Syntax { pos: usize, msg: String },
    /// A name is neither a declared variable nor a parameter.
    UndeclaredVariable { name: String, pos: usize },
    /// Division by zero or logarithm of a non-positive number.
    Domain(String),
    /// An evaluation point does not bind a variable the expression needs.
    UnboundVariable(String),
    /// An ODE sweep produced a non-finite state.
    NonFinite { t: f64 },
    /// A standing assumption on the problem or trajectory does not hold.
    Assumption(String),
    /// Newton iteration for an inverse change of variables did not converge.
    NewtonFailed { iterations: usize, residual: f64 },
    /// A matrix that must be invertible is (numerically) singular.
    Singular(String),
    /// Caller supplied inconsistent dimensions, grids or intervals.
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Syntax { pos, msg } => write!(f, "syntax error at {pos}: {msg}"),
            Error::UndeclaredVariable { name, pos } => {
                write!(f, "undeclared variable `{name}` at {pos}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::UnboundVariable(name) => write!(f, "no value bound for `{name}`"),
            Error::NonFinite { t } => write!(f, "non-finite state encountered at t = {t}"),
            Error::Assumption(msg) => write!(f, "assumption violated: {msg}"),
            Error::NewtonFailed { iterations, residual } => {
                write!(f, "Newton inversion did not converge after {iterations} iterations (residual {residual:e})")
            }
            Error::Singular(msg) => write!(f, "singular matrix: {msg}"),
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
