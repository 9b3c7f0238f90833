//! Relative degree and tangency stacks of constraint rows.
//!
//! A state constraint `c's ≤ e` has relative degree `q` when its `q`-th time
//! derivative along the dynamics is the first one in which a control appears.
//! Entering a constrained arc requires the constraint and its first `q − 1`
//! derivatives to vanish; a touch only requires the constraint itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BrunovskyForm;

/// Coefficients below this magnitude count as "no control authority".
pub const CONTROL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TangencyError {
    #[error("constraint row {row} out of range ({count} rows)")]
    RowOutOfRange { row: usize, count: usize },
    #[error("constraint row {row} never reaches a control within {states} derivatives")]
    NoControlAuthority { row: usize, states: usize },
}

/// Tangency rows and reduced constraint of one constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyStack {
    /// Constraint row index.
    pub row: usize,
    /// Relative degree `q`.
    pub relative_degree: usize,
    /// `c'A^j` over the chain state `s`, `j = 0..q−1` (or fewer when truncated).
    pub rows: Vec<DVector<f64>>,
    /// Offsets: `e_c` for row 0, zero afterwards.
    pub offsets: Vec<f64>,
    /// Reduced constraint over `z`: `[c'A^q | c'A^{q−1}B]`, or the row itself when `q = 0`.
    pub reduced: DVector<f64>,
    /// Right-hand side of the reduced constraint (`e_c` when `q = 0`, else zero).
    pub reduced_offset: f64,
    /// Whether only the first row is kept (instantaneous activation).
    pub truncated: bool,
    /// Length of `s`.
    pub state_dim: usize,
}

impl TangencyStack {
    /// Control part of the reduced constraint.
    pub fn control_row(&self) -> DVector<f64> {
        let m = self.reduced.len() - self.state_dim;
        self.reduced.rows(self.state_dim, m).into_owned()
    }

    /// Tangency rows as a matrix (`len × n`).
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.state_dim);
        for (i, r) in self.rows.iter().enumerate() {
            m.set_row(i, &r.transpose());
        }
        m
    }

    /// Tangency residuals `row_j · s − offset_j`.
    pub fn residuals(&self, s: &DVector<f64>) -> Vec<f64> {
        self.rows.iter().zip(&self.offsets).map(|(r, o)| r.dot(s) - o).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Differentiate constraint `row` along the chain dynamics until a control appears.
pub fn derive_tangency(form: &BrunovskyForm, row: usize) -> Result<TangencyStack, TangencyError> {
    let count = form.constraint_count();
    if row >= count {
        return Err(TangencyError::RowOutOfRange { row, count });
    }
    let (n, m) = (form.states(), form.inputs());
    let l = form.lmat.row(row).transpose();
    let e = form.evec[row];
    let d = l.rows(n, m).into_owned();
    if d.amax() > CONTROL_TOL {
        return Ok(TangencyStack {
            row,
            relative_degree: 0,
            rows: Vec::new(),
            offsets: Vec::new(),
            reduced: l,
            reduced_offset: e,
            truncated: false,
            state_dim: n,
        });
    }
    let a = form.a_canonical();
    let b = form.b_canonical();
    let mut c = l.rows(0, n).transpose();
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    for q in 1..=n {
        rows.push(c.transpose());
        offsets.push(if q == 1 { e } else { 0.0 });
        let control = &c * &b;
        c = &c * &a;
        if control.amax() > CONTROL_TOL {
            let mut reduced = DVector::zeros(n + m);
            reduced.rows_mut(0, n).copy_from(&c.transpose());
            reduced.rows_mut(n, m).copy_from(&control.transpose());
            return Ok(TangencyStack {
                row,
                relative_degree: q,
                rows,
                offsets,
                reduced,
                reduced_offset: 0.0,
                truncated: false,
                state_dim: n,
            });
        }
    }
    Err(TangencyError::NoControlAuthority { row, states: n })
}

/// Keep only the constraint itself, as required for an instantaneous touch.
pub fn instantaneous_stack(stack: &TangencyStack) -> TangencyStack {
    let mut out = stack.clone();
    if out.rows.len() > 1 {
        out.rows.truncate(1);
        out.offsets.truncate(1);
    }
    out.truncated = stack.relative_degree > 0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{to_brunovsky, LqProblem};

    fn triple_integrator_with_rows(c: DMatrix<f64>, d: DMatrix<f64>, e: Vec<f64>) -> BrunovskyForm {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 1.0;
        a[(1, 2)] = 1.0;
        let p = LqProblem::new(
            a,
            DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
            c,
            d,
            DVector::from_vec(e),
            DMatrix::zeros(3, 3),
            DMatrix::identity(1, 1),
            DMatrix::zeros(3, 1),
            DVector::zeros(3),
            DVector::zeros(3),
            1.0,
        )
        .unwrap();
        to_brunovsky(&p).unwrap()
    }

    #[test]
    fn position_bound_has_degree_three() {
        let f = triple_integrator_with_rows(
            DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 0.0]),
            DMatrix::zeros(1, 1),
            vec![0.5],
        );
        let st = derive_tangency(&f, 0).unwrap();
        assert_eq!(st.relative_degree, 3);
        assert_eq!(st.rows.len(), 3);
        for (j, r) in st.rows.iter().enumerate() {
            let mut expect = DVector::zeros(3);
            expect[j] = -1.0;
            assert_eq!(r, &expect);
        }
        assert_eq!(st.offsets, vec![0.5, 0.0, 0.0]);
        assert_eq!(st.control_row()[0], -1.0);
        assert_eq!(derive_tangency(&f, 0).unwrap(), st);

        let touch = instantaneous_stack(&st);
        assert_eq!(touch.rows.len(), 1);
        assert_eq!(touch.offsets, vec![0.5]);
        assert!(touch.truncated);
    }

    #[test]
    fn control_bound_has_degree_zero() {
        let f = triple_integrator_with_rows(DMatrix::zeros(1, 3), DMatrix::from_element(1, 1, 1.0), vec![2.0]);
        let st = derive_tangency(&f, 0).unwrap();
        assert_eq!(st.relative_degree, 0);
        assert!(st.rows.is_empty());
        assert_eq!(st.reduced_offset, 2.0);
        assert_eq!(instantaneous_stack(&st), st);
    }

    #[test]
    fn out_of_range_row() {
        let f = triple_integrator_with_rows(DMatrix::zeros(0, 3), DMatrix::zeros(0, 1), vec![]);
        assert!(matches!(derive_tangency(&f, 0), Err(TangencyError::RowOutOfRange { .. })));
    }

    #[test]
    fn zero_row_has_no_authority() {
        let f = triple_integrator_with_rows(DMatrix::zeros(1, 3), DMatrix::zeros(1, 1), vec![1.0]);
        assert!(matches!(derive_tangency(&f, 0), Err(TangencyError::NoControlAuthority { .. })));
    }
}
