use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A configuration value violates its type invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Caller passed a layer or slot index outside the valid range.
    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("compaction cannot free space: {0}")]
    NoProgress(String),

    #[error("out-of-order append: expected token {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The full (never-evicting) cache reached its per-layer budget.
    #[error("budget exhausted at step {step}: every slot of the {budget}-entry layer budget is in use")]
    BudgetExhausted { step: usize, budget: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trace carries no survival records")]
    MissingSurvival,
}
