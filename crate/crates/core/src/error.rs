use thiserror::Error;

/// Errors produced by the dynamics, identification and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("link index {index} out of range for a {links}-link chain")]
    IndexOutOfRange { index: usize, links: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("mass matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularMassMatrix { condition: f64 },

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Semantic { path: String, message: String },

    #[error("simulation failed at tick {tick}")]
    Simulation {
        tick: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            actual,
        })
    }
}
