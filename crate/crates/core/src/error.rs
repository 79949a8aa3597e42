use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// The channel matrix does not have full row rank at the configured tolerance.
    #[error(
        "singular channel: rank {rank} of {rows} rows, condition number of H*H^T = {condition:.3e} \
         (smallest/largest singular value {min_singular:.3e}/{max_singular:.3e})"
    )]
    SingularChannel {
        rank: usize,
        rows: usize,
        condition: f64,
        min_singular: f64,
        max_singular: f64,
    },

    /// A dimension is unsupported or two operands do not conform.
    #[error("size error: {0}")]
    Size(String),

    /// A structurally invalid configuration value.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
