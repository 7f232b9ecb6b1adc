use thiserror::Error;

use crate::env::{Action, Domain};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("service type {0} is out of range")]
    TypeOutOfRange(usize),

    #[error("action {action:?} is infeasible for service type {type_id}")]
    InfeasibleAction { action: Action, type_id: usize },

    #[error("no alive service of type {type_id} in the {domain:?} domain")]
    NotAlive { domain: Domain, type_id: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("non-monotone arrival timestamp for type {type_id}: {t} < {last}")]
    NonMonotoneArrival { type_id: usize, t: f64, last: f64 },

    #[error("negative holding time {0}")]
    NegativeHolding(f64),

    #[error("empty feasible action set")]
    EmptyActionSet,

    #[error("no pending decision")]
    NoPendingDecision,

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
