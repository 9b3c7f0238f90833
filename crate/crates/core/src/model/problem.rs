use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::linalg;

/// Which coordinates the matrices of a problem are written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Coordinates {
    /// General linear system; the transform to integrator chains is computed.
    #[default]
    Original,
    /// Already a set of integrator chains; the transform is the identity.
    Brunovsky,
}

/// A linear-quadratic optimal control problem with linear inequality constraints.
///
/// Dynamics `ẋ = A x + B u`, constraints `C x + D u ≤ e`, running cost
/// `x'Qx + 2 x'N u + u'R u`, fixed boundary states and fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub xt: DVector<f64>,
    pub horizon: f64,
    pub coordinates: Coordinates,
    pub state_names: Vec<String>,
    pub control_names: Vec<String>,
    pub constraint_names: Vec<String>,
}

impl LqProblem {
    /// Build an unconstrained problem (`c = 0`).
    #[allow(clippy::too_many_arguments)]
    pub fn unconstrained(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        n: DMatrix<f64>,
        x0: DVector<f64>,
        xt: DVector<f64>,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        let (ns, m) = (a.nrows(), b.ncols());
        Self::new(a, b, DMatrix::zeros(0, ns), DMatrix::zeros(0, m), DVector::zeros(0), q, r, n, x0, xt, horizon)
    }

    /// Build a problem, checking that all shapes agree.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        e: DVector<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        n: DMatrix<f64>,
        x0: DVector<f64>,
        xt: DVector<f64>,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        let ns = a.nrows();
        let m = b.ncols();
        let nc = c.nrows();
        let p = Self {
            state_names: (1..=ns).map(|i| format!("x{i}")).collect(),
            control_names: (1..=m).map(|i| format!("u{i}")).collect(),
            constraint_names: (1..=nc).map(|i| format!("g{i}")).collect(),
            a,
            b,
            c,
            d,
            e,
            q,
            r,
            n,
            x0,
            xt,
            horizon,
            coordinates: Coordinates::Original,
        };
        p.check_dimensions()?;
        Ok(p)
    }

    /// Mark the matrices as already being in integrator-chain form.
    pub fn in_brunovsky_coordinates(mut self) -> Self {
        self.coordinates = Coordinates::Brunovsky;
        self
    }

    /// Replace the display names; lengths must match the dimensions.
    pub fn with_names(mut self, states: &[&str], controls: &[&str], constraints: &[&str]) -> Result<Self, ModelError> {
        self.state_names = states.iter().map(|s| s.to_string()).collect();
        self.control_names = controls.iter().map(|s| s.to_string()).collect();
        self.constraint_names = constraints.iter().map(|s| s.to_string()).collect();
        self.check_dimensions()?;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn constraint_count(&self) -> usize {
        self.c.nrows()
    }

    /// Stacked cost matrix `[[Q, N], [N', R]]`.
    pub fn cost_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.q);
        k.view_mut((0, n), (n, m)).copy_from(&self.n);
        k.view_mut((n, 0), (m, n)).copy_from(&self.n.transpose());
        k.view_mut((n, n), (m, m)).copy_from(&self.r);
        k
    }

    /// Stacked constraint matrix `[C D]`.
    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        let (n, m, c) = (self.state_dim(), self.input_dim(), self.constraint_count());
        let mut l = DMatrix::zeros(c, n + m);
        l.view_mut((0, 0), (c, n)).copy_from(&self.c);
        l.view_mut((0, n), (c, m)).copy_from(&self.d);
        l
    }

    /// Running cost `x'Qx + 2x'Nu + u'Ru`.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + 2.0 * (x.transpose() * &self.n * u)[0] + (u.transpose() * &self.r * u)[0]
    }

    /// `C x + D u − e`; non-positive entries are satisfied constraints.
    pub fn constraint_residual(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u - &self.e
    }

    /// Controllability matrix `[B, AB, …, A^{n−1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut out = DMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for j in 0..n {
            out.view_mut((0, j * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    pub(crate) fn check_dimensions(&self) -> Result<(), ModelError> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let c = self.c.nrows();
        let shape = |what: &str, mat: &DMatrix<f64>, r: usize, k: usize| {
            if mat.shape() == (r, k) {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch {
                    what: what.to_string(),
                    expected: format!("{r}x{k}"),
                    found: format!("{}x{}", mat.nrows(), mat.ncols()),
                })
            }
        };
        let len = |what: &str, v: &DVector<f64>, k: usize| {
            if v.len() == k {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch {
                    what: what.to_string(),
                    expected: format!("{k}"),
                    found: format!("{}", v.len()),
                })
            }
        };
        if n == 0 || m == 0 {
            return Err(ModelError::DimensionMismatch {
                what: "A/B".into(),
                expected: "at least one state and one input".into(),
                found: format!("{n} states, {m} inputs"),
            });
        }
        shape("A", &self.a, n, n)?;
        shape("B", &self.b, n, m)?;
        shape("C", &self.c, c, n)?;
        shape("D", &self.d, c, m)?;
        len("e", &self.e, c)?;
        shape("Q", &self.q, n, n)?;
        shape("R", &self.r, m, m)?;
        shape("N", &self.n, n, m)?;
        len("x0", &self.x0, n)?;
        len("xT", &self.xt, n)?;
        let names = |what: &str, names: &[String], k: usize| {
            if names.len() == k {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch {
                    what: what.to_string(),
                    expected: format!("{k}"),
                    found: format!("{}", names.len()),
                })
            }
        };
        names("state_names", &self.state_names, n)?;
        names("control_names", &self.control_names, m)?;
        names("constraint_names", &self.constraint_names, c)?;
        Ok(())
    }
}

/// One of the standing assumptions checked by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// `(A, B)` controllable.
    Controllability,
    /// `Q` symmetric.
    CostSymmetry,
    /// `R` full rank.
    InputWeightRank,
    /// `T > 0`.
    PositiveHorizon,
}

/// Pass/fail verdict for one assumption with the quantity that decided it.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    pub measured: f64,
    pub detail: String,
}

/// Result of [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, which: Assumption) -> &AssumptionCheck {
        self.checks.iter().find(|c| c.assumption == which).expect("every assumption is checked")
    }

    /// Turn the first failed check into an error.
    pub fn into_result(self) -> Result<Self, ModelError> {
        match self.checks.iter().find(|c| !c.passed) {
            Some(c) => Err(ModelError::AssumptionViolated { assumption: c.assumption, detail: c.detail.clone() }),
            None => Ok(self),
        }
    }
}

/// Check controllability, symmetry of `Q`, rank of `R` and the horizon.
pub fn validate(problem: &LqProblem) -> Result<ValidationReport, ModelError> {
    problem.check_dimensions()?;
    let n = problem.state_dim();

    let rank = linalg::rank(&problem.controllability_matrix(), linalg::RANK_TOL);
    let asym = (&problem.q - problem.q.transpose()).abs().max();
    let rmin = linalg::min_singular_value(&problem.r);
    let checks = vec![
        AssumptionCheck {
            assumption: Assumption::Controllability,
            passed: rank == n,
            measured: rank as f64,
            detail: format!("controllability matrix rank {rank} of {n}"),
        },
        AssumptionCheck {
            assumption: Assumption::CostSymmetry,
            passed: asym <= 1e-12,
            measured: asym,
            detail: format!("max |Q - Q'| = {asym:e}"),
        },
        AssumptionCheck {
            assumption: Assumption::InputWeightRank,
            passed: rmin > 1e-10,
            measured: rmin,
            detail: format!("smallest singular value of R = {rmin:e}"),
        },
        AssumptionCheck {
            assumption: Assumption::PositiveHorizon,
            passed: problem.horizon > 0.0 && problem.horizon.is_finite(),
            measured: problem.horizon,
            detail: format!("T = {}", problem.horizon),
        },
    ];
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> LqProblem {
        LqProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::zeros(2, 1),
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn double_integrator_passes() {
        assert!(validate(&double_integrator()).unwrap().all_passed());
    }

    #[test]
    fn zero_system_is_uncontrollable() {
        let mut p = double_integrator();
        p.a = DMatrix::zeros(2, 2);
        p.b = DMatrix::zeros(2, 1);
        let rep = validate(&p).unwrap();
        let c = rep.check(Assumption::Controllability);
        assert!(!c.passed);
        assert_eq!(c.measured, 0.0);
    }

    #[test]
    fn singular_input_weight_fails() {
        let p = LqProblem::unconstrained(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            DVector::zeros(2),
            1.0,
        )
        .unwrap();
        let rep = validate(&p).unwrap();
        let c = rep.check(Assumption::InputWeightRank);
        assert!(!c.passed);
        assert_eq!(c.measured, 0.0);
        assert!(rep.check(Assumption::Controllability).passed);
    }

    #[test]
    fn asymmetric_cost_is_reported() {
        let mut p = double_integrator();
        p.q[(0, 1)] = 1e-6;
        let rep = validate(&p).unwrap();
        assert!(!rep.check(Assumption::CostSymmetry).passed);
        assert!(matches!(
            rep.into_result(),
            Err(ModelError::AssumptionViolated { assumption: Assumption::CostSymmetry, .. })
        ));
    }

    #[test]
    fn shape_errors_are_caught() {
        let mut p = double_integrator();
        p.q = DMatrix::zeros(3, 3);
        assert!(matches!(validate(&p), Err(ModelError::DimensionMismatch { .. })));
    }
}
