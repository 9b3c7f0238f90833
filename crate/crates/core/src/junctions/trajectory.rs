use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{JunctionError, JunctionSpec};
use crate::integrate::integrate_adaptive;
use crate::model::BrunovskyForm;
use crate::primitives::MotionPrimitive;

/// One primitive with solved coefficients on `[t_start, t_end]`.
#[derive(Debug, Clone)]
pub struct PrimitiveArc {
    pub primitive: Arc<MotionPrimitive>,
    /// Coefficients of every component, concatenated.
    pub coeffs: DVector<f64>,
    pub t_start: f64,
    pub t_end: f64,
}

/// Everything known about a trajectory at one instant, in chain coordinates.
#[derive(Debug, Clone)]
pub struct ArcPoint {
    pub s: DVector<f64>,
    pub lambda: DVector<f64>,
    pub a: DVector<f64>,
    /// Multipliers of the arc's active rows (in active-set order).
    pub mu: DVector<f64>,
}

impl PrimitiveArc {
    pub fn active_set(&self) -> &[usize] {
        &self.primitive.active_set
    }

    /// Arc-flow state of every component at `t`.
    pub fn flow(&self, t: f64) -> Vec<DVector<f64>> {
        self.flow_derivative(t, 0)
    }

    /// `order`-th time derivative of each component's flow state.
    pub fn flow_derivative(&self, t: f64, order: u32) -> Vec<DVector<f64>> {
        let dyns = &self.primitive.dynamics;
        dyns.components
            .iter()
            .zip(dyns.coeff_offsets())
            .map(|(c, off)| {
                let coeffs = self.coeffs.rows(off, c.dim());
                let w = c.propagator(t, self.t_start, self.t_end) * coeffs;
                if order == 0 {
                    w
                } else {
                    c.system.pow(order) * w
                }
            })
            .collect()
    }

    /// States, costates, controls and multipliers at `t`.
    pub fn point(&self, form: &BrunovskyForm, t: f64) -> ArcPoint {
        self.assemble_point(form, &self.flow(t))
    }

    /// `order`-th time derivative of [`point`](Self::point).
    pub fn point_derivative(&self, form: &BrunovskyForm, t: f64, order: u32) -> ArcPoint {
        self.assemble_point(form, &self.flow_derivative(t, order))
    }

    fn assemble_point(&self, form: &BrunovskyForm, flows: &[DVector<f64>]) -> ArcPoint {
        let (n, m) = (form.states(), form.inputs());
        let dyns = &self.primitive.dynamics;
        let mut s = DVector::zeros(n);
        let mut lambda = DVector::zeros(n);
        let mut a = DVector::zeros(m);
        let mut mu = DVector::zeros(dyns.active_set.len());
        for (c, w) in dyns.components.iter().zip(flows) {
            let nc = c.state_count();
            for (p, &i) in c.states.iter().enumerate() {
                s[i] = w[p];
                lambda[i] = w[nc + p];
            }
            let ac = &c.control_map * w;
            for (p, &i) in c.chains.iter().enumerate() {
                a[i] = ac[p];
            }
            let mc = &c.multiplier_map * w;
            for (p, r) in c.rows.iter().enumerate() {
                let k = dyns.active_set.iter().position(|x| x == r).expect("active row");
                mu[k] = mc[p];
            }
        }
        ArcPoint { s, lambda, a, mu }
    }

    /// Stacked `z = [s; a]` at `t`.
    pub fn z(&self, form: &BrunovskyForm, t: f64) -> DVector<f64> {
        let p = self.point(form, t);
        form.stack(&p.s, &p.a)
    }

    /// Hamiltonian `z'Kz + λ'(As + Ba)`; the multiplier term vanishes on the arc.
    pub fn hamiltonian(&self, form: &BrunovskyForm, t: f64) -> f64 {
        let p = self.point(form, t);
        let z = form.stack(&p.s, &p.a);
        let sdot = form.a_canonical() * &p.s + form.b_canonical() * &p.a;
        form.cost(&z) + p.lambda.dot(&sdot)
    }

    /// Costate of `(chain, order)` from partial sums of signed gradient derivatives.
    pub fn costate(&self, form: &BrunovskyForm, t: f64, chain: usize, order: usize) -> f64 {
        let dyns = &self.primitive.dynamics;
        let (ci, comp) = dyns
            .components
            .iter()
            .enumerate()
            .find(|(_, c)| c.chains.contains(&chain))
            .expect("chain belongs to a component");
        let op = comp.costate_operator(form, dyns, chain, order);
        (op * &self.flow(t)[ci])[0]
    }

    /// Largest Euler–Lagrange residual over the chains at `t`.
    pub fn euler_lagrange_residual(&self, form: &BrunovskyForm, t: f64) -> f64 {
        let dyns = &self.primitive.dynamics;
        let flows = self.flow(t);
        dyns.components
            .iter()
            .zip(&flows)
            .flat_map(|(c, w)| c.euler_lagrange_operators(form, dyns).into_iter().map(move |(op, _)| (op * w)[0].abs()))
            .fold(0.0, f64::max)
    }

    /// `∫ z'Wz dt` over the arc for a weight matrix `W` over `z`.
    pub fn quadratic_integral(&self, form: &BrunovskyForm, weight: &DMatrix<f64>, tol: f64) -> f64 {
        if self.t_end <= self.t_start {
            return 0.0;
        }
        integrate_adaptive(
            |t| {
                let z = self.z(form, t);
                (z.transpose() * weight * &z)[0]
            },
            self.t_start,
            self.t_end,
            tol,
        )
    }
}

/// A junction with its solved time and interior-point multipliers.
#[derive(Debug, Clone, Serialize)]
pub struct SolvedJunction {
    pub spec: JunctionSpec,
    pub time: f64,
    /// Multipliers of the tangency rows, in stack order.
    pub pi: Vec<f64>,
}

/// A solved piecewise trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub form: Arc<BrunovskyForm>,
    pub arcs: Vec<PrimitiveArc>,
    pub junctions: Vec<SolvedJunction>,
}

/// A sampled point of a trajectory, in chain and original coordinates.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub arc_index: usize,
    pub z: DVector<f64>,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Multipliers for every constraint row (zero when inactive).
    pub mu: DVector<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.form.horizon
    }

    pub fn junction_times(&self) -> Vec<f64> {
        self.junctions.iter().map(|j| j.time).collect()
    }

    /// Index of the arc containing `t` (right-continuous at junctions).
    pub fn arc_index(&self, t: f64) -> usize {
        self.arcs.iter().rposition(|a| a.t_start <= t).unwrap_or(0)
    }

    /// Sample the trajectory at `t`.
    pub fn evaluate(&self, t: f64) -> Result<TrajectoryPoint, JunctionError> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(JunctionError::OutOfHorizon { t, horizon });
        }
        let k = self.arc_index(t);
        let arc = &self.arcs[k];
        let p = arc.point(&self.form, t);
        let (x, u) = self.form.to_original(&p.s, &p.a);
        let mut mu = DVector::zeros(self.form.constraint_count());
        for (i, &r) in arc.active_set().iter().enumerate() {
            mu[r] = p.mu[i];
        }
        Ok(TrajectoryPoint { t, arc_index: k, z: self.form.stack(&p.s, &p.a), x, u, lambda: p.lambda, mu })
    }

    /// `∫ z'Kz dt`, arc by arc, with absolute tolerance `1e-6·T`.
    pub fn energy(&self) -> f64 {
        self.energy_with(&self.form.kmat)
    }

    /// `∫ z'Wz dt` for another weight matrix over `z`.
    pub fn energy_with(&self, weight: &DMatrix<f64>) -> f64 {
        let tol = 1e-6 * self.horizon();
        let per_arc = tol / self.arcs.len() as f64;
        self.arcs.iter().map(|a| a.quadratic_integral(&self.form, weight, per_arc)).sum()
    }

    /// Uniform sample times including both ends and every junction time.
    pub fn sample_times(&self, samples: usize) -> Vec<f64> {
        let h = self.horizon();
        let mut ts: Vec<f64> = (0..samples.max(2)).map(|i| h * i as f64 / (samples.max(2) - 1) as f64).collect();
        ts.extend(self.junction_times());
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// Largest `Lz − e` over a uniform grid (negative when strictly feasible).
    pub fn max_violation(&self, samples: usize) -> f64 {
        if self.form.constraint_count() == 0 {
            return f64::NEG_INFINITY;
        }
        self.sample_times(samples)
            .into_iter()
            .map(|t| {
                let arc = &self.arcs[self.arc_index(t)];
                self.form.constraint_residual(&arc.z(&self.form, t)).max()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
