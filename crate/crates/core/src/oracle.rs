//! Direct-collocation reference solver.
//!
//! The problem is transcribed on a uniform grid with trapezoidal cost and
//! trapezoidal dynamics defects, constraints enforced at every node, and
//! handed to a convex QP backend. Being convex, the QP optimum is global, so
//! it serves as ground truth for the analytic solver.

use std::sync::Arc;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::junctions::{solve_unconstrained, JunctionKind, JunctionSpec, Trajectory};
use crate::model::{to_brunovsky, LqProblem};
use crate::primitives::PrimitiveLibrary;

/// Fewest nodes accepted by [`CollocationGrid::new`].
pub const MIN_NODES: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("collocation needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("the collocation QP is infeasible")]
    QpInfeasible,
    #[error("QP solver stopped with status {0}")]
    Solver(String),
}

/// Uniform grid of `nodes` intervals (`nodes + 1` sample points).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationGrid {
    pub nodes: usize,
    pub h: f64,
    pub states: usize,
    pub inputs: usize,
}

impl CollocationGrid {
    pub fn new(problem: &LqProblem, nodes: usize) -> Result<Self, OracleError> {
        if nodes < MIN_NODES {
            return Err(OracleError::TooFewNodes(nodes));
        }
        Ok(Self { nodes, h: problem.horizon / nodes as f64, states: problem.state_dim(), inputs: problem.input_dim() })
    }

    pub fn variables(&self) -> usize {
        (self.nodes + 1) * (self.states + self.inputs)
    }

    fn x(&self, i: usize) -> usize {
        i * (self.states + self.inputs)
    }

    fn u(&self, i: usize) -> usize {
        self.x(i) + self.states
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nodes {
            0.5 * self.h
        } else {
            self.h
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// Sparse triplets.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }
}

/// `min ½v'Pv + q'v` subject to `A_eq v = b_eq`, `A_in v ≤ b_in`.
///
/// `p` holds the upper triangle only. Equality rows come first in `a`.
#[derive(Debug, Clone)]
pub struct QpData {
    pub variables: usize,
    pub p: Triplets,
    pub q: Vec<f64>,
    pub a: Triplets,
    pub b: Vec<f64>,
    pub equalities: usize,
    pub inequalities: usize,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers, one per row of `a`; non-negative on inequality rows.
    pub duals: Vec<f64>,
}

/// A convex QP solver.
pub trait QpBackend {
    fn solve(&self, qp: &QpData) -> Result<QpSolution, OracleError>;
}

/// Interior-point backend built on clarabel.
#[derive(Debug, Clone, Copy)]
pub struct ClarabelBackend {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iter: 400 }
    }
}

impl QpBackend for ClarabelBackend {
    fn solve(&self, qp: &QpData) -> Result<QpSolution, OracleError> {
        let m = qp.equalities + qp.inequalities;
        let n = qp.variables;
        let p = CscMatrix::new_from_triplets(n, n, qp.p.rows.clone(), qp.p.cols.clone(), qp.p.vals.clone());
        let a = CscMatrix::new_from_triplets(m, n, qp.a.rows.clone(), qp.a.cols.clone(), qp.a.vals.clone());
        let mut cones = Vec::new();
        if qp.equalities > 0 {
            cones.push(SupportedConeT::ZeroConeT(qp.equalities));
        }
        if qp.inequalities > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(qp.inequalities));
        }
        let settings = DefaultSettings {
            verbose: false,
            max_iter: self.max_iter,
            tol_gap_abs: self.tolerance,
            tol_gap_rel: self.tolerance,
            tol_feas: self.tolerance,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &qp.q, &a, &qp.b, &cones, settings);
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                Ok(QpSolution { x: sol.x.clone(), duals: sol.z.clone() })
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Err(OracleError::QpInfeasible),
            other => Err(OracleError::Solver(format!("{other:?}"))),
        }
    }
}

/// Contact of one constraint row found in the collocation solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveRun {
    pub row: usize,
    pub start: f64,
    pub end: f64,
    /// `touch` when the run is shorter than [`TOUCH_WIDTH`] of the horizon.
    pub kind: JunctionKind,
}

/// Runs shorter than this fraction of the horizon count as touches.
pub const TOUCH_WIDTH: f64 = 0.02;

/// Result of [`collocate`].
#[derive(Debug, Clone, Serialize)]
pub struct Collocation {
    pub nodes: usize,
    pub cost: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// Multiplier density per node and row (node duals divided by the trapezoid weight).
    pub multipliers: DMatrix<f64>,
    pub active: Vec<ActiveRun>,
}

impl Collocation {
    /// Rows and contact kinds in time order, comparable with a junction sequence.
    pub fn active_pattern(&self) -> Vec<(JunctionKind, usize)> {
        self.active.iter().map(|r| (r.kind, r.row)).collect()
    }
}

/// Contact pattern of a junction sequence: one entry per touch or entry/exit pair.
pub fn sequence_pattern(specs: &[JunctionSpec]) -> Vec<(JunctionKind, usize)> {
    let mut out = Vec::new();
    for s in specs {
        match s.kind {
            JunctionKind::Touch => out.extend(s.rows.iter().map(|&r| (JunctionKind::Touch, r))),
            JunctionKind::Entry => out.extend(s.rows.iter().map(|&r| (JunctionKind::Entry, r))),
            JunctionKind::Exit => {}
        }
    }
    out
}

/// Build the trapezoidal QP for `problem` on `grid`.
pub fn transcribe(problem: &LqProblem, grid: &CollocationGrid) -> QpData {
    let (n, m, c) = (grid.states, grid.inputs, problem.constraint_count());
    let k = problem.cost_matrix();
    let nv = grid.variables();
    let mut p = Triplets::default();
    for i in 0..=grid.nodes {
        let w = 2.0 * grid.weight(i);
        let base = grid.x(i);
        for r in 0..n + m {
            for s in r..n + m {
                p.push(base + r, base + s, w * k[(r, s)]);
            }
        }
    }

    let mut a = Triplets::default();
    let mut b = Vec::new();
    let mut row = 0;
    for (node, target) in [(0, &problem.x0), (grid.nodes, &problem.xt)] {
        for j in 0..n {
            a.push(row, grid.x(node) + j, 1.0);
            b.push(target[j]);
            row += 1;
        }
    }
    let half = 0.5 * grid.h;
    for i in 0..grid.nodes {
        // x_{i+1} − x_i − h/2 (A x_i + B u_i + A x_{i+1} + B u_{i+1}) = 0
        for j in 0..n {
            a.push(row, grid.x(i + 1) + j, 1.0);
            a.push(row, grid.x(i) + j, -1.0);
            for l in 0..n {
                a.push(row, grid.x(i) + l, -half * problem.a[(j, l)]);
                a.push(row, grid.x(i + 1) + l, -half * problem.a[(j, l)]);
            }
            for l in 0..m {
                a.push(row, grid.u(i) + l, -half * problem.b[(j, l)]);
                a.push(row, grid.u(i + 1) + l, -half * problem.b[(j, l)]);
            }
            b.push(0.0);
            row += 1;
        }
    }
    let equalities = row;
    for i in 0..=grid.nodes {
        for r in 0..c {
            for l in 0..n {
                a.push(row, grid.x(i) + l, problem.c[(r, l)]);
            }
            for l in 0..m {
                a.push(row, grid.u(i) + l, problem.d[(r, l)]);
            }
            b.push(problem.e[r]);
            row += 1;
        }
    }
    QpData { variables: nv, p, q: vec![0.0; nv], a, b, equalities, inequalities: row - equalities }
}

/// Trapezoidal cost of sampled states and controls.
pub fn discrete_cost(problem: &LqProblem, grid: &CollocationGrid, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
    (0..=grid.nodes).map(|i| grid.weight(i) * problem.stage_cost(&xs[i], &us[i])).sum()
}

/// Solve the collocation QP with the default backend.
pub fn collocate(problem: &LqProblem, nodes: usize) -> Result<Collocation, OracleError> {
    collocate_with(problem, nodes, &ClarabelBackend::default())
}

pub fn collocate_with(problem: &LqProblem, nodes: usize, backend: &dyn QpBackend) -> Result<Collocation, OracleError> {
    let grid = CollocationGrid::new(problem, nodes)?;
    let qp = transcribe(problem, &grid);
    let sol = backend.solve(&qp)?;
    let (n, m, c) = (grid.states, grid.inputs, problem.constraint_count());
    let xs: Vec<DVector<f64>> =
        (0..=nodes).map(|i| DVector::from_column_slice(&sol.x[grid.x(i)..grid.x(i) + n])).collect();
    let us: Vec<DVector<f64>> =
        (0..=nodes).map(|i| DVector::from_column_slice(&sol.x[grid.u(i)..grid.u(i) + m])).collect();
    let cost = discrete_cost(problem, &grid, &xs, &us);
    let mut mult = DMatrix::zeros(nodes + 1, c);
    for i in 0..=nodes {
        for r in 0..c {
            mult[(i, r)] = sol.duals[qp.equalities + i * c + r].max(0.0) / grid.weight(i);
        }
    }
    let slack = DMatrix::from_fn(nodes + 1, c, |i, r| -problem.constraint_residual(&xs[i], &us[i])[r]);
    let active = active_runs(&grid, &sol.duals[qp.equalities..], &slack, problem.horizon);
    Ok(Collocation {
        nodes,
        cost,
        times: (0..=nodes).map(|i| grid.time(i)).collect(),
        states: xs,
        controls: us,
        multipliers: mult,
        active,
    })
}

/// Group contacts into runs.
///
/// Node multipliers of a state constraint concentrate at the ends of a
/// boundary arc, so clusters of binding nodes are found from the multipliers
/// and two neighbouring clusters merge into one interval when the slack
/// between them stays within `1e-3` of the row's slack range.
fn active_runs(grid: &CollocationGrid, duals: &[f64], slack: &DMatrix<f64>, horizon: f64) -> Vec<ActiveRun> {
    let c = slack.ncols();
    let mut runs = Vec::new();
    for r in 0..c {
        let z: Vec<f64> = (0..=grid.nodes).map(|i| duals[i * c + r].max(0.0)).collect();
        let peak = z.iter().cloned().fold(0.0, f64::max);
        if peak < 1e-7 {
            continue;
        }
        let mut clusters: Vec<(usize, usize)> = Vec::new();
        for (i, &v) in z.iter().enumerate() {
            if v <= 1e-3 * peak {
                continue;
            }
            match clusters.last_mut() {
                Some((_, end)) if i <= *end + 2 => *end = i,
                _ => clusters.push((i, i)),
            }
        }
        let col = slack.column(r);
        let range = col.max() - col.min().min(0.0);
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (a, b) in clusters {
            match merged.last_mut() {
                Some((_, end)) if col.rows(*end, a - *end + 1).max() <= 1e-3 * range => *end = b,
                _ => merged.push((a, b)),
            }
        }
        for (a, b) in merged {
            let (t0, t1) = (grid.time(a), grid.time(b));
            let kind = if t1 - t0 < TOUCH_WIDTH * horizon { JunctionKind::Touch } else { JunctionKind::Entry };
            runs.push(ActiveRun { row: r, start: t0, end: t1, kind });
        }
    }
    runs.sort_by(|a, b| a.start.total_cmp(&b.start));
    runs
}

/// Sample an analytic trajectory on the collocation grid, in original coordinates.
pub fn sample_on_grid(traj: &Trajectory, grid: &CollocationGrid) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    (0..=grid.nodes)
        .map(|i| {
            let p = traj.evaluate(grid.time(i).min(traj.form.horizon)).expect("grid lies inside the horizon");
            (p.x, p.u)
        })
        .unzip()
}

/// Random controllable single-input instance with `constraints` state rows.
///
/// Every row has a random direction and clears both boundary values. The
/// first `active` rows cut `cut` of the way into the interior excursion of
/// the unconstrained solution; the others sit well above it.
pub fn random_instance(seed: u64, states: usize, constraints: usize, active: usize, cut: f64) -> LqProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = states;
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(n + 1, n + 1, |_, _| rng.gen_range(-1.0..1.0));
        let k = &g * g.transpose() * 0.2 + DMatrix::identity(n + 1, n + 1) * 0.1;
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let xt = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let cm = DMatrix::from_fn(constraints, n, |_, _| rng.gen_range(-1.0..1.0));
        let horizon = rng.gen_range(1.0..3.0);
        let Ok(mut p) = LqProblem::new(
            a,
            b,
            cm,
            DMatrix::zeros(constraints, 1),
            DVector::from_element(constraints, 1e6),
            k.view((0, 0), (n, n)).into_owned(),
            k.view((n, n), (1, 1)).into_owned(),
            k.view((0, n), (n, 1)).into_owned(),
            x0,
            xt,
            horizon,
        ) else {
            continue;
        };
        let Ok(form) = to_brunovsky(&p) else { continue };
        let lib = PrimitiveLibrary::new(Arc::new(form));
        let Ok(free) = solve_unconstrained(&lib) else { continue };
        let ts = free.sample_times(2000);
        let xs: Vec<DVector<f64>> = ts.iter().map(|&t| free.evaluate(t).expect("inside horizon").x).collect();
        let mut ok = true;
        for r in 0..constraints {
            let row = p.c.row(r);
            let vals: Vec<f64> = xs.iter().map(|x| row.dot(&x.transpose())).collect();
            let ends = vals[0].max(vals[vals.len() - 1]);
            let peak = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let excursion = peak - ends;
            if r < active {
                if excursion < 0.1 * (1.0 + ends.abs()) {
                    ok = false;
                    break;
                }
                p.e[r] = peak - cut * excursion;
            } else {
                p.e[r] = peak + 0.5 * (1.0 + peak.abs());
            }
        }
        if ok {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator(x0: [f64; 2], xt: [f64; 2], ceiling: Option<f64>) -> LqProblem {
        let (c, d, e) = match ceiling {
            Some(l) => (DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::zeros(1, 1), DVector::from_element(1, l)),
            None => (DMatrix::zeros(0, 2), DMatrix::zeros(0, 1), DVector::zeros(0)),
        };
        LqProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c,
            d,
            e,
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::zeros(2, 1),
            DVector::from_row_slice(&x0),
            DVector::from_row_slice(&xt),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_coarse_grid() {
        let p = double_integrator([0.0, 0.0], [1.0, 0.0], None);
        assert_eq!(collocate(&p, 10).unwrap_err(), OracleError::TooFewNodes(10));
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let p = double_integrator([0.0, 0.0], [0.0, 0.0], None);
        let sol = collocate(&p, 100).unwrap();
        assert!(sol.cost.abs() < 1e-8);
        assert!(sol.states.iter().all(|x| x.amax() < 1e-6));
    }

    #[test]
    fn double_integrator_converges_to_twelve() {
        // exact optimum u = 6 − 12t has cost 12
        let p = double_integrator([0.0, 0.0], [1.0, 0.0], None);
        let errs: Vec<f64> = [200, 400, 800].iter().map(|&k| (collocate(&p, k).unwrap().cost - 12.0).abs()).collect();
        assert!(errs[0] < 1.5e-3, "{errs:?}");
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        // second order: halving h quarters the error
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn bryson_ho_active_interval() {
        let p = double_integrator([0.0, 1.0], [0.0, -1.0], Some(1.0 / 9.0));
        let sol = collocate(&p, 600).unwrap();
        assert!((sol.cost - 8.0).abs() < 1e-2, "{}", sol.cost);
        assert_eq!(sol.active.len(), 1, "{:?}", sol.active);
        let run = &sol.active[0];
        assert_eq!(run.kind, JunctionKind::Entry);
        assert!((run.start - 1.0 / 3.0).abs() < 0.01 && (run.end - 2.0 / 3.0).abs() < 0.01, "{run:?}");
        // the node multipliers form two equal atoms whose total is the position
        // costate change across the arc, 72
        let grid = CollocationGrid::new(&p, 600).unwrap();
        let mass = |a: usize, b: usize| -> f64 { (a..b).map(|i| sol.multipliers[(i, 0)] * grid.weight(i)).sum() };
        let (first, second) = (mass(0, 300), mass(300, 601));
        assert!((first + second - 72.0).abs() < 0.5, "{first} {second}");
        assert!((first - second).abs() < 0.5, "{first} {second}");
    }

    #[test]
    fn infeasible_bounds_are_reported() {
        // the ceiling sits below the initial position
        let p = double_integrator([1.0, 0.0], [1.0, 0.0], Some(0.5));
        assert_eq!(collocate(&p, 60).unwrap_err(), OracleError::QpInfeasible);
    }

    #[test]
    fn random_instances_are_controllable() {
        for seed in 0..4 {
            let p = random_instance(seed, 4, 2, 1, 0.3);
            assert!(to_brunovsky(&p).is_ok());
            assert_eq!(p, random_instance(seed, 4, 2, 1, 0.3));
            assert!(p.e[1] < 1e5);
        }
    }
}
