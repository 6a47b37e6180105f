use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A point left the declared phase space or became non-finite.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The triangular factor of a frame push fell below the rank tolerance.
    #[error("degenerate frame: diagonal entry {index} is {value:e}{}", step_suffix(.step))]
    DegenerateFrame {
        index: usize,
        value: f64,
        step: Option<usize>,
    },

    #[error("unsupported map: {0}")]
    UnsupportedMap(String),

    #[error("resource budget exceeded: {message} (largest feasible n = {feasible_n:?})")]
    Resource {
        message: String,
        feasible_n: Option<usize>,
    },

    #[error("config error at `{path}`{}: {message}", line_suffix(.line))]
    Config {
        path: String,
        line: Option<usize>,
        message: String,
    },

    #[error("orbit index {index}: {source}")]
    Orbit { index: usize, source: Box<Error> },
}

fn step_suffix(step: &Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

fn line_suffix(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!(" (line {l})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attaches the step index of an orbit to a degenerate-frame error.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::DegenerateFrame { index, value, .. } => Error::DegenerateFrame {
                index,
                value,
                step: Some(step),
            },
            other => other,
        }
    }
}
