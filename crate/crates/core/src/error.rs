use thiserror::Error;

use crate::solvers::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("matrix is not positive semidefinite ({0})")]
    NotPsd(String),

    #[error("matrix is not positive definite ({0})")]
    NotPd(String),

    #[error("empty user subset")]
    EmptySubset,

    #[error(
        "unbounded tone subproblem: user {user} has zero energy price but positive rate weight"
    )]
    UnboundedTone { user: usize },

    #[error("ellipsoid numerical breakdown: g'Ag = {0:e}")]
    EllipsoidBreakdown(f64),

    #[error("ellipsoid collapsed outside feasible orthant")]
    EllipsoidCollapsed,

    #[error("bisection bracket expansion failed after {0} expansions")]
    BracketExpansion(usize),

    #[error("energy not monotone in the price: {0}")]
    NonMonotone(String),

    #[error("no convergence after {iterations} outer iterations")]
    NonConvergence {
        iterations: usize,
        best: Box<SolveReport>,
    },

    #[error("admission test undecided after {rounds} rounds (final gap {gap:?})")]
    Undecided { rounds: usize, gap: Vec<f64> },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
