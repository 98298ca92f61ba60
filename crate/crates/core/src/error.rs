use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorisation or spectral decomposition broke down.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    /// A scheme step failed; `index` is the step number `n` of `X_n -> X_{n+1}`.
    #[error("step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn at_step(self, index: usize) -> Self {
        Error::Step {
            index,
            source: Box::new(self),
        }
    }
}
