use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    /// Argument outside the domain where a map is defined.
    #[error("{what}: value {value} outside admissible range {range}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        range: String,
    },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// `line` is 1-based; 0 when the error has no source line.
    #[error("config error{}: {message}", line_suffix(*line))]
    Config { line: usize, message: String },

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn line_suffix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

impl Error {
    pub(crate) fn out_of_domain(what: &'static str, value: f64, range: impl Into<String>) -> Self {
        Error::OutOfDomain {
            what,
            value,
            range: range.into(),
        }
    }
}
