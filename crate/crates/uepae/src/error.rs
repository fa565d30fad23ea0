use thiserror::Error;

/// Crate-wide error type.
///
/// Contract violations that can only arise from programmer error (shape
/// mismatches, stale tapes) panic instead; these variants cover conditions
/// reachable from user input or from the data itself.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cross-entropy input contains a probability <= 0")]
    NonPositiveProbability,

    #[error("non-finite gradient entries; update rejected")]
    NonFiniteGradient,

    #[error("pre-normalization codeword norm below 1e-12; step rejected")]
    DegenerateCodeword,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("degenerate or empty bound region: {0}")]
    DegenerateRegion(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidConfig(_) | Error::DegenerateRegion(_) => 2,
            Error::NonPositiveProbability
            | Error::NonFiniteGradient
            | Error::DegenerateCodeword
            | Error::Divergence { .. } => 3,
            Error::Checkpoint(_) | Error::Io(_) => 4,
        }
    }
}
