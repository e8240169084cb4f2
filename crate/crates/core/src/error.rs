use crate::mechanisms::{ExecutionMode, MechanismKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A precondition or postcondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{kind} does not support {mode} execution")]
    UnsupportedMode {
        kind: MechanismKind,
        mode: ExecutionMode,
    },

    #[error("failed to allocate {bytes} bytes of scratch memory")]
    Allocation { bytes: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

/// Returns a contract error unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    }};
}
pub(crate) use ensure;
