use thiserror::Error;

/// Errors raised by the simulator and the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates an invariant. `field` is a dotted path.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// A nonlinear fit did not converge.
    #[error("fit failed: {reason} (restarts: {restarts}, last cost: {last_cost:.3e})")]
    Fit {
        reason: String,
        restarts: usize,
        last_cost: f64,
    },

    /// A numerical routine produced an unusable result.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Prefixes the field path of a configuration error, leaving other kinds untouched.
    pub fn within(self, parent: &str) -> Self {
        match self {
            Error::Config { field, message } => Error::Config {
                field: format!("{parent}.{field}"),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
