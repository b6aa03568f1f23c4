use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("singular linear system at iteration {iteration}")]
    Singular { iteration: usize },

    #[error("ill-conditioned matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("degenerate effective degrees of freedom: 1 - gamma*e/n = {denominator:.6e}")]
    DegenerateDf { denominator: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::IllConditioned { .. }
                | Error::DegenerateDf { .. }
                | Error::Numeric(_)
        )
    }

    /// Short machine-readable code, printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "E_PARAM",
            Error::Domain(_) => "E_DOMAIN",
            Error::Dimension(_) => "E_DIM",
            Error::Input(_) => "E_INPUT",
            Error::Parse { .. } => "E_PARSE",
            Error::Singular { .. } => "E_SINGULAR",
            Error::IllConditioned { .. } => "E_ILLCOND",
            Error::DegenerateDf { .. } => "E_DEGENERATE_DF",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Io(_) => "E_IO",
        }
    }
}
