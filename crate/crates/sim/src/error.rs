//! Simulator and benchmark errors.

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// The scene spec cannot be satisfied (e.g. separation in a too-small
    /// extent) within the retry budget.
    #[error("infeasible scene spec: {0}")]
    InfeasibleSpec(String),

    /// The exhaustive oracle would have to enumerate too large a space.
    #[error("oracle limit exceeded: {got} local objects, limit {limit}")]
    OracleTooLarge { got: usize, limit: usize },

    /// A spec field failed validation.
    #[error("invalid {what}: {why}")]
    InvalidSpec { what: &'static str, why: String },

    #[error(transparent)]
    Core(#[from] objloc_core::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
