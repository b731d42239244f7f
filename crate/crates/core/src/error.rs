use thiserror::Error;

/// Errors produced anywhere in the ORAM stack.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument lies outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// The client detected a broken main invariant. Always a bug.
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// The store was used before it was formatted.
    #[error("storage not initialized")]
    Uninitialized,
    /// A request or message had the wrong shape for the tree.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// An envelope failed authentication.
    #[error("envelope authentication failed")]
    Authentication,
    /// The remote server answered with an ERROR frame.
    #[error("remote error (code {code}): {message}")]
    Remote { code: u8, message: String },
    /// A privacy budget would be exceeded by the query.
    #[error("privacy budget exhausted: {remaining_epsilon} epsilon remaining")]
    BudgetExhausted { remaining_epsilon: f64, remaining_delta: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the environment (files, sockets) rather than of
    /// the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Remote { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
