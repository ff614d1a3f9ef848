//! Finite model-theoretic verification kernel.
//!
//! The crate builds finite multi-sorted structures and checks, exhaustively at
//! desk scale, the combinatorial properties that connect quantifier-free type
//! equality, splitting of partitioned types, end-homogeneity, and
//! indiscernibility. Witness structures (colored tuple equivalences, sparse
//! hypergraphs, layered order configurations, towers of binary trees with
//! transfer maps) live in their own modules together with their validators.

pub mod detect;
pub mod gallery;
pub mod grid;
pub mod json;
pub mod structure;
pub mod tree_stack;

use thiserror::Error as ThisError;

/// Unified error type for all checkers and constructors.
#[derive(Debug, Clone, PartialEq, Eq, ThisError)]
pub enum Error {
    /// Tuples disagree in length or sort profile, or a declaration is malformed.
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    /// An exhaustive search hit its step cap before finishing. Never silent:
    /// callers must treat this as "unknown", not "no witness".
    #[error("budget exceeded: {steps} steps performed, cap {cap}")]
    BudgetExceeded { steps: u64, cap: u64 },
    /// A claimed substructure embedding does not hold.
    #[error("not a substructure: {0}")]
    NotSubstructure(String),
    /// A grid operation requires downright closure and the input lacks it.
    #[error("grid is not downright closed")]
    NotDownrightClosed,
    /// Parameters violate a documented precondition.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
