//! Problem data, assumption checks and the integrator-chain transform.

mod brunovsky;
mod file;
mod problem;

pub use brunovsky::{chain_slices, to_brunovsky, BrunovskyForm, ChainLayout};
pub use file::ProblemFile;
pub use problem::{validate, Assumption, AssumptionCheck, Coordinates, LqProblem, ValidationReport};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: String, expected: String, found: String },
    #[error("system is not controllable: controllability rank {rank} < {states}")]
    NotControllable { rank: usize, states: usize },
    #[error("input {input} has no independent effect on the state")]
    DegenerateInput { input: usize },
    #[error("assumption {assumption:?} violated: {detail}")]
    AssumptionViolated { assumption: Assumption, detail: String },
    #[error("not in chain form: {0}")]
    NotCanonical(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}
