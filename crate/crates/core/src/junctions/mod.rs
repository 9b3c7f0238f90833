//! Joining motion primitives at junctions.
//!
//! A sequence of [`JunctionSpec`]s fixes which constraint rows switch on and off
//! and in what order. For fixed junction times the optimality conditions
//! (boundary values, state continuity, costate jumps, tangency) are linear in
//! the arc coefficients and the interior-point multipliers `π`, so they are
//! solved exactly. The junction times are then found from the Hamiltonian
//! continuity condition, one scalar equation per junction.

mod diagnostics;
mod solve;
mod system;
mod trajectory;

pub use diagnostics::{diagnose, write_csv, Diagnostics};
pub use solve::{solve_junctions, solve_junctions_with, solve_unconstrained, SolveOptions};
pub use system::{assemble, EquationBlock, EquationKind, JunctionSystem, LinearSolution};
pub use trajectory::{ArcPoint, PrimitiveArc, SolvedJunction, Trajectory, TrajectoryPoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BrunovskyForm;
use crate::primitives::PrimitiveError;
use crate::tangency::{derive_tangency, instantaneous_stack, TangencyStack};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JunctionError {
    #[error("boundary-value system is singular (condition number {condition:e})")]
    SingularBoundarySystem { condition: f64 },
    #[error("junction system is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("no junction times satisfy the Hamiltonian condition: {0}")]
    NoRoot(String),
    #[error("{unknowns} unknowns but {equations} equations ({breakdown})")]
    CountMismatch { unknowns: usize, equations: usize, breakdown: String },
    #[error("invalid junction sequence: {0}")]
    InvalidSequence(String),
    #[error("t = {t} lies outside [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error("writing trajectory: {0}")]
    Io(String),
}

/// How the constraint rows of a junction change there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JunctionKind {
    /// The rows become active and stay active until a matching exit.
    Entry,
    /// The rows leave the active set.
    Exit,
    /// The rows are active only at this instant.
    Touch,
}

impl std::fmt::Display for JunctionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Entry => "entry",
            Self::Exit => "exit",
            Self::Touch => "touch",
        })
    }
}

impl std::str::FromStr for JunctionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entry" => Ok(Self::Entry),
            "exit" => Ok(Self::Exit),
            "touch" => Ok(Self::Touch),
            other => Err(format!("unknown junction kind `{other}` (expected entry, exit or touch)")),
        }
    }
}

/// One junction of a sequence, with the tangency conditions it imposes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSpec {
    pub kind: JunctionKind,
    /// Constraint rows switching at this junction (sorted).
    pub rows: Vec<usize>,
    /// Tangency conditions enforced here: the full stack at an entry, the
    /// constraint itself at a touch, nothing at an exit.
    pub stacks: Vec<TangencyStack>,
    /// Junction time once solved.
    pub time: Option<f64>,
}

impl JunctionSpec {
    pub fn new(form: &BrunovskyForm, kind: JunctionKind, rows: &[usize]) -> Result<Self, JunctionError> {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if rows.is_empty() {
            return Err(JunctionError::InvalidSequence("a junction needs at least one constraint row".into()));
        }
        let mut stacks = Vec::new();
        for &r in &rows {
            let full = derive_tangency(form, r).map_err(PrimitiveError::from)?;
            match kind {
                JunctionKind::Entry => stacks.push(full),
                JunctionKind::Exit => {}
                JunctionKind::Touch => {
                    if full.relative_degree == 0 {
                        return Err(JunctionError::InvalidSequence(format!(
                            "row {r} involves the control directly and cannot be touched instantaneously"
                        )));
                    }
                    stacks.push(instantaneous_stack(&full));
                }
            }
        }
        Ok(Self { kind, rows, stacks, time: None })
    }

    pub fn entry(form: &BrunovskyForm, rows: &[usize]) -> Result<Self, JunctionError> {
        Self::new(form, JunctionKind::Entry, rows)
    }

    pub fn exit(form: &BrunovskyForm, rows: &[usize]) -> Result<Self, JunctionError> {
        Self::new(form, JunctionKind::Exit, rows)
    }

    pub fn touch(form: &BrunovskyForm, rows: &[usize]) -> Result<Self, JunctionError> {
        Self::new(form, JunctionKind::Touch, rows)
    }

    /// Touch that imposes the whole tangency stack (`y = ẏ = … = 0` up to the
    /// relative degree) rather than the constraint row alone.
    ///
    /// Stricter than needed for optimality; kept to compare against that
    /// formulation.
    pub fn full_touch(form: &BrunovskyForm, rows: &[usize]) -> Result<Self, JunctionError> {
        let mut spec = Self::entry(form, rows)?;
        spec.kind = JunctionKind::Touch;
        Ok(spec)
    }

    /// Number of tangency equations (and `π` multipliers) at this junction.
    pub fn tangency_count(&self) -> usize {
        self.stacks.iter().map(|s| s.len()).sum()
    }

    /// Short label such as `touch:0` or `entry:1+2`.
    pub fn label(&self) -> String {
        let rows: Vec<String> = self.rows.iter().map(|r| r.to_string()).collect();
        format!("{}:{}", self.kind, rows.join("+"))
    }
}

/// Active sets of the arcs produced by a sequence: one more than the number of junctions.
pub fn arc_active_sets(specs: &[JunctionSpec]) -> Result<Vec<Vec<usize>>, JunctionError> {
    let mut current: Vec<usize> = Vec::new();
    let mut sets = vec![current.clone()];
    for (k, spec) in specs.iter().enumerate() {
        match spec.kind {
            JunctionKind::Entry => {
                if let Some(r) = spec.rows.iter().find(|r| current.contains(r)) {
                    return Err(JunctionError::InvalidSequence(format!(
                        "junction {k} enters row {r}, which is already active"
                    )));
                }
                current.extend(&spec.rows);
                current.sort_unstable();
            }
            JunctionKind::Exit => {
                if let Some(r) = spec.rows.iter().find(|r| !current.contains(r)) {
                    return Err(JunctionError::InvalidSequence(format!(
                        "junction {k} exits row {r}, which is not active"
                    )));
                }
                current.retain(|r| !spec.rows.contains(r));
            }
            JunctionKind::Touch => {
                if let Some(r) = spec.rows.iter().find(|r| current.contains(r)) {
                    return Err(JunctionError::InvalidSequence(format!(
                        "junction {k} touches row {r}, which is already active"
                    )));
                }
            }
        }
        sets.push(current.clone());
    }
    if !current.is_empty() {
        return Err(JunctionError::InvalidSequence(format!("rows {current:?} are still active at the final time")));
    }
    Ok(sets)
}

#[cfg(test)]
mod tests;
