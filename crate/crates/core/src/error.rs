use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A size guard was exceeded (too many qubits for a dense representation).
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A serialized distribution, sample set or archive is malformed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("connection error: {0}")]
    Connection(String),

    /// The peer sent an ERROR frame or violated the wire protocol.
    #[error("protocol error (code {code}): {message}")]
    Protocol { code: u8, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
