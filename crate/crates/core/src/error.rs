use thiserror::Error;

/// Errors raised by the pc-core solvers, adapters and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("configuration length {got} does not match {expected} agents")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("move {value} of agent {agent} is outside its arity {arity}")]
    MoveOutOfRange {
        agent: usize,
        value: usize,
        arity: usize,
    },

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    #[error("factor table of {entries} entries exceeds the dense cap of {cap}")]
    ScopeTooLarge { entries: usize, cap: usize },

    #[error("joint space of {size} points exceeds the enumeration cap of {cap}")]
    SpaceTooLarge { size: u128, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("multipliers sum to zero; cannot rescale")]
    ZeroMultipliers,

    #[error("invalid parent structure: {0}")]
    InvalidParents(String),

    #[error("agent {agent} has no samples for move {mv}")]
    EmptyCell { agent: usize, mv: usize },

    #[error("estimate history is empty")]
    EmptyHistory,

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

pub type Result<T> = std::result::Result<T, PcError>;
