use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{arc_active_sets, JunctionError, JunctionKind, JunctionSpec, PrimitiveArc, SolvedJunction, Trajectory};
use crate::model::BrunovskyForm;
use crate::primitives::{MotionPrimitive, PrimitiveLibrary};

/// Inner solves above this condition number are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    /// Last coordinate of each component flow equals one.
    Normalization,
    InitialState,
    FinalState,
    StateContinuity,
    /// `λ⁻ − λ⁺ − N'π = 0`.
    CostateJump,
    /// Tangency rows `N s = offsets`.
    Tangency,
    /// `H⁻ = H⁺`; the only equation involving the junction time nonlinearly.
    Hamiltonian,
}

/// A group of equations of one kind, attached to an arc or a junction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquationBlock {
    pub kind: EquationKind,
    pub arc: Option<usize>,
    pub junction: Option<usize>,
    pub count: usize,
}

/// Unknown layout and equation list for one junction sequence.
///
/// Unknowns are ordered as: coefficients of every arc, then the `π`
/// multipliers of every junction, then the junction times. Multipliers of
/// active rows are not separate unknowns: on each arc they are affine in the
/// arc state and costate.
#[derive(Debug, Clone)]
pub struct JunctionSystem {
    pub form: Arc<BrunovskyForm>,
    pub specs: Vec<JunctionSpec>,
    pub primitives: Vec<Arc<MotionPrimitive>>,
    pub arc_offsets: Vec<usize>,
    pub pi_offsets: Vec<usize>,
    /// Number of unknowns solved by the inner linear system.
    pub linear_unknowns: usize,
    pub equations: Vec<EquationBlock>,
}

/// Solution of the inner linear system for fixed junction times.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub values: DVector<f64>,
    /// Largest condition number over the decoupled blocks, after equilibration.
    pub condition: f64,
}

/// Build the residual system for `specs` in the given order.
pub fn assemble(specs: &[JunctionSpec], library: &PrimitiveLibrary) -> Result<JunctionSystem, JunctionError> {
    let form = library.shared_form();
    let sets = arc_active_sets(specs)?;
    let primitives: Vec<Arc<MotionPrimitive>> = sets.iter().map(|s| library.get(s)).collect::<Result<_, _>>()?;
    let n = form.states();

    let mut arc_offsets = Vec::new();
    let mut acc = 0;
    for p in &primitives {
        arc_offsets.push(acc);
        acc += p.dynamics.coeff_dim();
    }
    let mut pi_offsets = Vec::new();
    for s in specs {
        pi_offsets.push(acc);
        acc += s.tangency_count();
    }

    let mut equations = Vec::new();
    for (k, p) in primitives.iter().enumerate() {
        let count = p.dynamics.components.len();
        equations.push(EquationBlock { kind: EquationKind::Normalization, arc: Some(k), junction: None, count });
    }
    equations.push(EquationBlock { kind: EquationKind::InitialState, arc: Some(0), junction: None, count: n });
    for (j, s) in specs.iter().enumerate() {
        for (kind, count) in [
            (EquationKind::StateContinuity, n),
            (EquationKind::CostateJump, n),
            (EquationKind::Tangency, s.tangency_count()),
            (EquationKind::Hamiltonian, 1),
        ] {
            equations.push(EquationBlock { kind, arc: None, junction: Some(j), count });
        }
    }
    equations.push(EquationBlock {
        kind: EquationKind::FinalState,
        arc: Some(primitives.len() - 1),
        junction: None,
        count: n,
    });

    let system = JunctionSystem {
        form,
        specs: specs.to_vec(),
        primitives,
        arc_offsets,
        pi_offsets,
        linear_unknowns: acc,
        equations,
    };
    let (u, e) = system.counts();
    if u != e {
        return Err(JunctionError::CountMismatch { unknowns: u, equations: e, breakdown: system.breakdown() });
    }
    Ok(system)
}

/// Rows of `s(t)` and `λ(t)` as linear maps of one arc's coefficients.
struct ArcMaps {
    state: DMatrix<f64>,
    costate: DMatrix<f64>,
    /// One normalization row per component.
    normalization: Vec<DVector<f64>>,
}

fn arc_maps(form: &BrunovskyForm, prim: &MotionPrimitive, t: f64, ta: f64, tb: f64) -> ArcMaps {
    let n = form.states();
    let dyns = &prim.dynamics;
    let dim = dyns.coeff_dim();
    let mut state = DMatrix::zeros(n, dim);
    let mut costate = DMatrix::zeros(n, dim);
    let mut normalization = Vec::new();
    for (c, off) in dyns.components.iter().zip(dyns.coeff_offsets()) {
        let d = c.dim();
        let nc = c.state_count();
        let p = c.propagator(t, ta, tb);
        for (q, &i) in c.states.iter().enumerate() {
            state.view_mut((i, off), (1, d)).copy_from(&p.row(q));
            costate.view_mut((i, off), (1, d)).copy_from(&p.row(nc + q));
        }
        let start = c.propagator(ta, ta, tb);
        let mut row = DVector::zeros(dim);
        row.rows_mut(off, d).copy_from(&start.row(d - 1).transpose());
        normalization.push(row);
    }
    ArcMaps { state, costate, normalization }
}

impl JunctionSystem {
    pub fn junction_count(&self) -> usize {
        self.specs.len()
    }

    /// `(#unknowns, #equations)` including junction times and Hamiltonian equations.
    pub fn counts(&self) -> (usize, usize) {
        (self.linear_unknowns + self.specs.len(), self.equations.iter().map(|b| b.count).sum())
    }

    /// Equation total per kind.
    pub fn count_of(&self, kind: EquationKind) -> usize {
        self.equations.iter().filter(|b| b.kind == kind).map(|b| b.count).sum()
    }

    /// Unknowns and equations contributed by junction `j`, excluding the
    /// normalization bookkeeping of the arc it opens.
    pub fn junction_increment(&self, j: usize) -> (usize, usize) {
        let arc = &self.primitives[j + 1];
        let unknowns = arc.dynamics.coeff_dim() - arc.dynamics.components.len() + self.specs[j].tangency_count() + 1;
        let equations = self.equations.iter().filter(|b| b.junction == Some(j)).map(|b| b.count).sum();
        (unknowns, equations)
    }

    pub fn breakdown(&self) -> String {
        let kinds = [
            EquationKind::Normalization,
            EquationKind::InitialState,
            EquationKind::FinalState,
            EquationKind::StateContinuity,
            EquationKind::CostateJump,
            EquationKind::Tangency,
            EquationKind::Hamiltonian,
        ];
        let parts: Vec<String> = kinds.iter().map(|k| format!("{k:?}={}", self.count_of(*k))).collect();
        let coeffs = self.pi_offsets.first().copied().unwrap_or(self.linear_unknowns);
        format!(
            "arc coefficients={coeffs}, pi={}, times={}; {}",
            self.linear_unknowns - coeffs,
            self.specs.len(),
            parts.join(", ")
        )
    }

    fn arc_bounds(&self, times: &[f64]) -> Vec<(f64, f64)> {
        let mut knots = vec![0.0];
        knots.extend_from_slice(times);
        knots.push(self.form.horizon);
        knots.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn check_times(&self, times: &[f64]) -> Result<(), JunctionError> {
        if times.len() != self.specs.len() {
            return Err(JunctionError::InvalidSequence(format!(
                "{} junction times given for {} junctions",
                times.len(),
                self.specs.len()
            )));
        }
        let horizon = self.form.horizon;
        let mut prev = 0.0;
        for &t in times {
            if !(t > prev && t < horizon) {
                return Err(JunctionError::OutOfHorizon { t, horizon });
            }
            prev = t;
        }
        Ok(())
    }

    /// The inner linear system `M x = r` for fixed junction times.
    pub fn linear_system(&self, times: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>), JunctionError> {
        self.check_times(times)?;
        let form = &*self.form;
        let n = form.states();
        let size = self.linear_unknowns;
        let rows = size;
        let mut m = DMatrix::zeros(rows, size);
        let mut r = DVector::zeros(rows);
        let bounds = self.arc_bounds(times);
        let mut eq = 0;

        for (k, p) in self.primitives.iter().enumerate() {
            let (ta, tb) = bounds[k];
            let off = self.arc_offsets[k];
            for row in arc_maps(form, p, ta, ta, tb).normalization {
                m.view_mut((eq, off), (1, row.len())).copy_from(&row.transpose());
                r[eq] = 1.0;
                eq += 1;
            }
        }

        let first = arc_maps(form, &self.primitives[0], 0.0, bounds[0].0, bounds[0].1);
        m.view_mut((eq, 0), (n, first.state.ncols())).copy_from(&first.state);
        r.rows_mut(eq, n).copy_from(&form.s0);
        eq += n;

        for (j, spec) in self.specs.iter().enumerate() {
            let t = times[j];
            let (l, rr) = (j, j + 1);
            let left = arc_maps(form, &self.primitives[l], t, bounds[l].0, bounds[l].1);
            let right = arc_maps(form, &self.primitives[rr], t, bounds[rr].0, bounds[rr].1);
            let (lo, ro) = (self.arc_offsets[l], self.arc_offsets[rr]);
            let (lw, rw) = (left.state.ncols(), right.state.ncols());

            m.view_mut((eq, lo), (n, lw)).copy_from(&left.state);
            m.view_mut((eq, ro), (n, rw)).copy_from(&(-&right.state));
            eq += n;

            m.view_mut((eq, lo), (n, lw)).copy_from(&left.costate);
            m.view_mut((eq, ro), (n, rw)).copy_from(&(-&right.costate));
            let mut p = self.pi_offsets[j];
            for st in &spec.stacks {
                for row in &st.rows {
                    for i in 0..n {
                        m[(eq + i, p)] = -row[i];
                    }
                    p += 1;
                }
            }
            eq += n;

            for st in &spec.stacks {
                for (row, offset) in st.rows.iter().zip(&st.offsets) {
                    let lhs = row.transpose() * &left.state;
                    m.view_mut((eq, lo), (1, lw)).copy_from(&lhs);
                    r[eq] = *offset;
                    eq += 1;
                }
            }
        }

        let last = self.primitives.len() - 1;
        let (ta, tb) = bounds[last];
        let fin = arc_maps(form, &self.primitives[last], tb, ta, tb);
        m.view_mut((eq, self.arc_offsets[last]), (n, fin.state.ncols())).copy_from(&fin.state);
        r.rows_mut(eq, n).copy_from(&form.st);
        eq += n;
        debug_assert_eq!(eq, rows);
        Ok((m, r))
    }

    /// Solve the inner system for fixed junction times.
    pub fn solve_linear(&self, times: &[f64]) -> Result<LinearSolution, JunctionError> {
        let (m, r) = self.linear_system(times)?;
        let (values, condition) = solve_blocks(&m, &r);
        if condition.is_nan() || condition > CONDITION_LIMIT || values.iter().any(|v| !v.is_finite()) {
            return Err(JunctionError::IllConditioned { condition });
        }
        Ok(LinearSolution { values, condition })
    }

    /// Trajectory for fixed junction times (the Hamiltonian condition is not enforced).
    pub fn solve_fixed(&self, times: &[f64]) -> Result<Trajectory, JunctionError> {
        let sol = self.solve_linear(times)?;
        Ok(self.trajectory(times, &sol.values))
    }

    fn trajectory(&self, times: &[f64], x: &DVector<f64>) -> Trajectory {
        let bounds = self.arc_bounds(times);
        let arcs = self
            .primitives
            .iter()
            .enumerate()
            .map(|(k, p)| PrimitiveArc {
                primitive: p.clone(),
                coeffs: x.rows(self.arc_offsets[k], p.dynamics.coeff_dim()).into_owned(),
                t_start: bounds[k].0,
                t_end: bounds[k].1,
            })
            .collect();
        let junctions = self
            .specs
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let mut spec = s.clone();
                spec.time = Some(times[j]);
                let pi = x.rows(self.pi_offsets[j], s.tangency_count()).iter().copied().collect();
                SolvedJunction { spec, time: times[j], pi }
            })
            .collect();
        Trajectory { form: self.form.clone(), arcs, junctions }
    }

    /// `H⁻ − H⁺` at every junction of a solved trajectory.
    pub fn hamiltonian_residuals(&self, traj: &Trajectory) -> Vec<f64> {
        traj.junctions
            .iter()
            .enumerate()
            .map(|(j, jn)| {
                let h_left = traj.arcs[j].hamiltonian(&self.form, jn.time);
                let h_right = traj.arcs[j + 1].hamiltonian(&self.form, jn.time);
                h_left - h_right
            })
            .collect()
    }

    /// One scalar equation per junction fixing its time.
    ///
    /// At a touch this is `H⁻ − H⁺`. At a single-row entry or exit the
    /// Hamiltonian jump is a perfect square: with states continuous and the
    /// control stationary on each side, `H⁻ − H⁺ = ±Δa'RΔa`, and `Δa` is a
    /// multiple of `R⁻¹R̃ₐ'` times `π_{q−1} − μ⁺` at an entry and `μ⁻` at an
    /// exit. Those scalars are used instead, so that the roots are simple and
    /// can be located to full precision.
    pub fn time_residuals(&self, traj: &Trajectory) -> Vec<f64> {
        let form = &*self.form;
        traj.junctions
            .iter()
            .enumerate()
            .map(|(j, jn)| {
                let spec = &jn.spec;
                let (left, right) = (&traj.arcs[j], &traj.arcs[j + 1]);
                let mu_of = |arc: &PrimitiveArc, row: usize| {
                    let k = arc.active_set().iter().position(|&r| r == row).expect("row is active");
                    arc.point(form, jn.time).mu[k]
                };
                match (spec.kind, spec.rows.as_slice()) {
                    (JunctionKind::Entry, &[row]) => {
                        let last = if spec.stacks[0].is_empty() { 0.0 } else { jn.pi[spec.tangency_count() - 1] };
                        last - mu_of(right, row)
                    }
                    (JunctionKind::Exit, &[row]) => mu_of(left, row),
                    _ => left.hamiltonian(form, jn.time) - right.hamiltonian(form, jn.time),
                }
            })
            .collect()
    }

    /// Solve the inner system at `times` and return the junction-time residuals with the trajectory.
    pub fn evaluate(&self, times: &[f64]) -> Result<(Vec<f64>, Trajectory), JunctionError> {
        let traj = self.solve_fixed(times)?;
        Ok((self.time_residuals(&traj), traj))
    }
}

/// Solve `M x = r` block by block over the connected components of its
/// sparsity pattern, returning the solution and the worst block condition.
fn solve_blocks(m: &DMatrix<f64>, r: &DVector<f64>) -> (DVector<f64>, f64) {
    let (rows, cols) = m.shape();
    let mut parent: Vec<usize> = (0..cols).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..rows {
        let nz: Vec<usize> = (0..cols).filter(|&j| m[(i, j)] != 0.0).collect();
        for w in nz.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut x = DVector::zeros(cols);
    let mut worst: f64 = 1.0;
    let mut row_root: Vec<Option<usize>> = vec![None; rows];
    for (i, root) in row_root.iter_mut().enumerate() {
        match (0..cols).find(|&j| m[(i, j)] != 0.0) {
            Some(j) => *root = Some(find(&mut parent, j)),
            None if r[i] != 0.0 => return (x, f64::INFINITY),
            None => {}
        }
    }
    let mut roots: Vec<usize> = (0..cols).map(|j| find(&mut parent, j)).collect();
    roots.sort_unstable();
    roots.dedup();
    for root in roots {
        let bc: Vec<usize> = (0..cols).filter(|&j| find(&mut parent, j) == root).collect();
        let br: Vec<usize> = (0..rows).filter(|&i| row_root[i] == Some(root)).collect();
        if br.len() != bc.len() {
            return (x, f64::INFINITY);
        }
        let mut a = DMatrix::from_fn(br.len(), bc.len(), |i, j| m[(br[i], bc[j])]);
        let mut b = DVector::from_fn(br.len(), |i, _| r[br[i]]);
        for i in 0..a.nrows() {
            let s = a.row(i).amax();
            a.row_mut(i).scale_mut(1.0 / s);
            b[i] /= s;
        }
        let col_scale: Vec<f64> = (0..a.ncols()).map(|j| 1.0 / a.column(j).amax()).collect();
        for (j, s) in col_scale.iter().enumerate() {
            a.column_mut(j).scale_mut(*s);
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        worst = worst.max(cond);
        if !cond.is_finite() {
            return (x, f64::INFINITY);
        }
        let y = svd.solve(&b, 0.0).expect("singular vectors were computed");
        for (j, &c) in bc.iter().enumerate() {
            x[c] = y[j] * col_scale[j];
        }
    }
    (x, worst)
}
