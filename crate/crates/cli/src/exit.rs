//! Failure type carrying the process exit code.
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 2 | usage error |
//! | 3 | missing file or other I/O failure |
//! | 4 | invalid configuration |
//! | 5 | predictions, gold trees or embeddings do not line up |
//! | 6 | malformed input data |
//! | 7 | gradient check above tolerance |
//! | 8 | non-finite training loss or gradient |

use std::fmt;
use std::path::Path;

use rstsplit::error::{EmbeddingError, EvalError, NnError};
use rstsplit::Error;

pub const IO: u8 = 3;
pub const CONFIG: u8 = 4;
pub const ALIGNMENT: u8 = 5;
pub const DATA: u8 = 6;
pub const GRADCHECK: u8 = 7;
pub const NUMERICS: u8 = 8;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(CONFIG, message)
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) => IO,
        Error::Config(_) | Error::OracleTooLarge { .. } => CONFIG,
        Error::Eval(_) => ALIGNMENT,
        Error::Embedding(EmbeddingError::MissingDocument(_) | EmbeddingError::TokenCount { .. }) => ALIGNMENT,
        Error::NonFiniteLoss { .. } | Error::Nn(NnError::NonFiniteGradient(_)) => NUMERICS,
        Error::Tree(_) | Error::Dis(_) | Error::Corpus(_) | Error::Embedding(_) | Error::Nn(_) | Error::Checkpoint(_) => {
            DATA
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::new(code_for(&err), err.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        Error::from(err).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::new(IO, err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
