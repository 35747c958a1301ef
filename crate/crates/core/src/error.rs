use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// The regularized Gram matrix was not numerically positive definite.
    #[error("factorization failed at pivot {index}: value {pivot:e}")]
    Factorization { index: usize, pivot: f64 },

    #[error("numerical consistency error: {0}")]
    Numerical(String),

    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// The concatenated error matrix is not Schur stable.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite value in {0}")]
    Fault(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 4 infeasible, 3 any other runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Infeasible(_) => 4,
            _ => 3,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
