use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid liquid order {order}: supported orders are 2..=10")]
    InvalidOrder { order: usize },

    #[error("decomposition failed: {reason} (residual {residual:.3e})")]
    Decomposition { reason: String, residual: f64 },

    #[error("discretization failed: {0}")]
    Discretization(String),

    #[error("Cauchy node coincides with pole lambda[{state}] (distance {distance:.3e})")]
    Pole { state: usize, distance: f64 },

    #[error("Woodbury correction is singular at node {node} (|1 + k11| = {magnitude:.3e})")]
    WoodburySingularity { node: usize, magnitude: f64 },

    #[error("state diverged at step {step}")]
    DivergedState { step: usize },

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter budget exceeded: {count} parameters, limit {limit}")]
    BudgetExceeded { count: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
