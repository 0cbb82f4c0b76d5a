use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not agree or a matrix is empty.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// An argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A dense materialization would exceed the allocation guard.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// A non-finite value appeared.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// SGD diverged.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
    /// A sampler could not produce a point satisfying its constraint.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
