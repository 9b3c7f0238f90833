//! Optimality ODEs and closed-form solution families for each active set.
//!
//! For chain `i` with pivot `x_i` (the lowest state of the chain) every entry
//! of `z` in the chain is a derivative of the pivot. The Euler–Lagrange
//! equation `Σ_j (−1)^j dʲ/dtʲ ∂(z'Kz + μ'R̃z)/∂z_{i,j} = 0` is then a
//! constant-coefficient ODE in the pivots, where `R̃` holds the reduced active
//! constraints (the first time derivative of each row in which a control
//! appears).

mod dynamics;
mod roots;

pub use dynamics::{arc_dynamics, Anchor, ArcDynamics, ComponentDynamics, ModeGroup};
pub use roots::{characteristic_roots, polynomial_roots, Mode, Root, SolutionBasis, CLUSTER_TOL};

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::model::BrunovskyForm;
use crate::tangency::{derive_tangency, TangencyError, TangencyStack};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("active rows {rows:?} are linearly dependent in the control")]
    DependentActiveSet { rows: Vec<usize> },
    #[error("active rows {rows:?} impose contradictory equalities")]
    InfeasibleActiveSet { rows: Vec<usize> },
    #[error("characteristic polynomial is identically zero")]
    DegenerateOde,
    #[error("root {re}+{im}i has relative residual {residual:e}")]
    RootResidual { re: f64, im: f64, residual: f64 },
    #[error("active rows {rows:?} do not reach a control of chain {chain}")]
    UnderdeterminedMultipliers { chain: usize, rows: Vec<usize> },
    #[error("arc flow has no usable spectral split")]
    SpectralSplit,
    #[error("chain {chain} out of range")]
    ChainOutOfRange { chain: usize },
    #[error(transparent)]
    Tangency(#[from] TangencyError),
    #[error("primitive cache: {0}")]
    Cache(String),
}

/// Alternating operator `Σ_n (−1)^n dⁿ/dtⁿ`, `n = 0..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeOperator {
    pub coeffs: Vec<f64>,
}

impl DerivativeOperator {
    pub fn new(k: usize) -> Self {
        Self { coeffs: (0..=k).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect() }
    }

    /// Shifted operator for the costate of derivative order `j`: entries
    /// `(column order, derivative order, sign)` with
    /// `λ^j = Σ_{n=1}^{k−j} (−1)^n d^{n−1}/dt^{n−1} F_{j+n}`.
    pub fn shifted(&self, j: usize) -> Vec<(usize, usize, f64)> {
        let k = self.coeffs.len() - 1;
        (1..=k.saturating_sub(j)).map(|n| (j + n, n - 1, self.coeffs[n])).collect()
    }
}

/// Scalar optimality ODE of one chain for one active set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveOde {
    pub chain: usize,
    pub active_set: Vec<usize>,
    /// Coefficients of `d⁰ … d^{2k}` applied to this chain's pivot.
    pub lhs_coeffs: Vec<f64>,
    /// Coefficients applied to the pivots of other chains coupled through the cost.
    pub coupling_coeffs: Vec<(usize, Vec<f64>)>,
    /// Per active row, coefficients of derivative powers applied to its multiplier.
    pub rhs_multiplier_coeffs: Vec<(usize, Vec<f64>)>,
    /// Per active row touching this chain, the reduced constraint on the pivot and its right-hand side.
    pub constraint_coeffs: Vec<(usize, Vec<f64>, f64)>,
    /// Chain states held constant by active state constraints: (index into `s`, value).
    pub pinned_states: Vec<(usize, f64)>,
    pub fully_pinned: bool,
}

impl PrimitiveOde {
    /// Characteristic polynomial of the pivot/multiplier system of this chain.
    ///
    /// With no active row on the chain this is the pivot operator itself; with
    /// one row it is `det [[P, M], [G, 0]] = −M·G`. Chains coupled to others
    /// keep their own operator; their joint spectrum lives in the arc flow.
    pub fn characteristic_polynomial(&self) -> Vec<f64> {
        match (self.rhs_multiplier_coeffs.as_slice(), self.constraint_coeffs.as_slice()) {
            ([(r1, m)], [(r2, g, _)]) if r1 == r2 && self.coupling_coeffs.is_empty() => {
                linalg::poly_mul(m, g).into_iter().map(|c| -c).collect()
            }
            _ => self.lhs_coeffs.clone(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rhs_multiplier_coeffs.is_empty()
    }
}

fn trim(mut v: Vec<f64>) -> Vec<f64> {
    while v.len() > 1 && v.last() == Some(&0.0) {
        v.pop();
    }
    v
}

fn stacks_for(form: &BrunovskyForm, active: &[usize]) -> Result<Vec<TangencyStack>, PrimitiveError> {
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let stacks: Vec<TangencyStack> = sorted.iter().map(|&r| derive_tangency(form, r)).collect::<Result<_, _>>()?;

    // all equalities implied on z by holding the rows active
    let (n, m) = (form.states(), form.inputs());
    let mut eq_rows: Vec<DVector<f64>> = Vec::new();
    let mut eq_rhs: Vec<f64> = Vec::new();
    for st in &stacks {
        for (row, off) in st.rows.iter().zip(&st.offsets) {
            let mut z = DVector::zeros(n + m);
            z.rows_mut(0, n).copy_from(row);
            eq_rows.push(z);
            eq_rhs.push(*off);
        }
        eq_rows.push(st.reduced.clone());
        eq_rhs.push(st.reduced_offset);
    }
    if !eq_rows.is_empty() {
        let e = DMatrix::from_columns(&eq_rows).transpose();
        let mut aug = DMatrix::zeros(e.nrows(), e.ncols() + 1);
        aug.view_mut((0, 0), e.shape()).copy_from(&e);
        aug.set_column(e.ncols(), &DVector::from_vec(eq_rhs));
        if linalg::rank(&aug, 1e-10) > linalg::rank(&e, 1e-10) {
            return Err(PrimitiveError::InfeasibleActiveSet { rows: sorted });
        }
        let controls = DMatrix::from_fn(stacks.len(), m, |i, j| stacks[i].reduced[n + j]);
        if linalg::rank(&controls, 1e-10) < stacks.len() {
            return Err(PrimitiveError::DependentActiveSet { rows: sorted });
        }
    }
    Ok(stacks)
}

/// Derive the scalar optimality ODE of `chain` for the given active rows.
pub fn derive_ode(form: &BrunovskyForm, chain: usize, active: &[usize]) -> Result<PrimitiveOde, PrimitiveError> {
    if chain >= form.inputs() {
        return Err(PrimitiveError::ChainOutOfRange { chain });
    }
    let stacks = stacks_for(form, active)?;
    Ok(ode_from_stacks(form, chain, &stacks))
}

fn ode_from_stacks(form: &BrunovskyForm, chain: usize, stacks: &[TangencyStack]) -> PrimitiveOde {
    let layout = &form.layout;
    let ki = layout.chains[chain];
    let pivot_poly = |l: usize| {
        let kl = layout.chains[l];
        let mut p = vec![0.0; ki + kl + 1];
        for j in 0..=ki {
            let sign = if j % 2 == 0 { 2.0 } else { -2.0 };
            for q in 0..=kl {
                p[j + q] += sign * form.kmat[(layout.column(chain, j), layout.column(l, q))];
            }
        }
        trim(p)
    };
    let lhs_coeffs = pivot_poly(chain);
    let coupling_coeffs = (0..form.inputs())
        .filter(|&l| l != chain)
        .map(|l| (l, pivot_poly(l)))
        .filter(|(_, p)| p.iter().any(|&c| c != 0.0))
        .collect();

    let mut rhs_multiplier_coeffs = Vec::new();
    let mut constraint_coeffs = Vec::new();
    let mut pinned_states = Vec::new();
    for st in stacks {
        let mc: Vec<f64> =
            (0..=ki).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } * st.reduced[layout.column(chain, j)]).collect();
        if mc.iter().any(|&c| c != 0.0) {
            rhs_multiplier_coeffs.push((st.row, trim(mc)));
            let g: Vec<f64> = (0..=ki).map(|j| st.reduced[layout.column(chain, j)]).collect();
            constraint_coeffs.push((st.row, trim(g), st.reduced_offset));
        }
        if let Some(first) = st.rows.first() {
            let nz: Vec<usize> = (0..first.len()).filter(|&i| first[i] != 0.0).collect();
            if let [idx] = nz.as_slice() {
                let (owner, j0) = layout.owner(*idx);
                if owner == chain {
                    pinned_states.push((*idx, st.offsets[0] / first[*idx]));
                    for extra in 1..st.relative_degree.min(ki - j0) {
                        pinned_states.push((layout.state_index(chain, j0 + extra), 0.0));
                    }
                }
            }
        }
    }
    pinned_states.sort_by_key(|p| p.0);
    pinned_states.dedup_by_key(|p| p.0);
    let fully_pinned = pinned_states.len() == ki;
    PrimitiveOde {
        chain,
        active_set: stacks.iter().map(|s| s.row).collect(),
        lhs_coeffs,
        coupling_coeffs,
        rhs_multiplier_coeffs,
        constraint_coeffs,
        pinned_states,
        fully_pinned,
    }
}

/// Closed-form multipliers of the active rows touching one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierLaw {
    pub chain: usize,
    /// Active rows whose multipliers are described.
    pub rows: Vec<usize>,
    /// Index of the arc-flow component that carries them.
    pub component: usize,
    /// `μ = map · w` with `w` the component's arc state.
    pub map: DMatrix<f64>,
}

/// Express the multipliers of the chain's active rows as functions of the arc state.
pub fn eliminate_multipliers(ode: &PrimitiveOde, form: &BrunovskyForm) -> Result<MultiplierLaw, PrimitiveError> {
    let stacks = stacks_for(form, &ode.active_set)?;
    let dynamics = arc_dynamics(form, &ode.active_set, &stacks)?;
    let (component, comp) = dynamics
        .components
        .iter()
        .enumerate()
        .find(|(_, c)| c.chains.contains(&ode.chain))
        .expect("every chain belongs to a component");
    for (row, coeffs) in &ode.rhs_multiplier_coeffs {
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(PrimitiveError::UnderdeterminedMultipliers { chain: ode.chain, rows: vec![*row] });
        }
    }
    Ok(MultiplierLaw { chain: ode.chain, rows: comp.rows.clone(), component, map: comp.multiplier_map.clone() })
}

/// Everything needed to build arcs for one active set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub active_set: Vec<usize>,
    pub stacks: Vec<TangencyStack>,
    pub odes: Vec<PrimitiveOde>,
    /// Per-chain real solution basis; `None` when the chain's polynomial degenerates.
    pub bases: Vec<Option<SolutionBasis>>,
    pub dynamics: ArcDynamics,
}

impl MotionPrimitive {
    pub fn derive(form: &BrunovskyForm, active: &[usize]) -> Result<Self, PrimitiveError> {
        let stacks = stacks_for(form, active)?;
        let active: Vec<usize> = stacks.iter().map(|s| s.row).collect();
        let odes: Vec<PrimitiveOde> = (0..form.inputs()).map(|i| ode_from_stacks(form, i, &stacks)).collect();
        let bases = odes.iter().map(|o| characteristic_roots(o).ok()).collect();
        let dynamics = arc_dynamics(form, &active, &stacks)?;
        Ok(Self { active_set: active, stacks, odes, bases, dynamics })
    }

    /// Largest Euler–Lagrange operator norm over the chains, relative to the operator scale.
    pub fn euler_lagrange_defect(&self, form: &BrunovskyForm) -> f64 {
        self.dynamics
            .components
            .iter()
            .map(|c| {
                let ops = c.euler_lagrange_operators(form, &self.dynamics);
                ops.iter().map(|(op, scale)| op.amax() / scale.max(1.0)).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Result of [`enumerate_with_pruning`].
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub primitives: Vec<MotionPrimitive>,
    /// Rejected subsets with the reason.
    pub pruned: Vec<(Vec<usize>, PrimitiveError)>,
}

/// All subsets of constraint rows in order of size, then lexicographically.
pub fn active_subsets(c: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> =
        (0u64..(1u64 << c)).map(|mask| (0..c).filter(|&i| mask >> i & 1 == 1).collect()).collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    subsets
}

/// Derive every feasible primitive and record why the others were dropped.
pub fn enumerate_with_pruning(form: &BrunovskyForm) -> Enumeration {
    let results: Vec<(Vec<usize>, Result<MotionPrimitive, PrimitiveError>)> = active_subsets(form.constraint_count())
        .into_par_iter()
        .map(|s| {
            let r = MotionPrimitive::derive(form, &s);
            (s, r)
        })
        .collect();
    let mut primitives = Vec::new();
    let mut pruned = Vec::new();
    for (s, r) in results {
        match r {
            Ok(p) => primitives.push(p),
            Err(e) => pruned.push((s, e)),
        }
    }
    Enumeration { primitives, pruned }
}

/// Derive every feasible primitive.
pub fn enumerate_primitives(form: &BrunovskyForm) -> Vec<MotionPrimitive> {
    enumerate_with_pruning(form).primitives
}

const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    chains: Vec<usize>,
    horizon: f64,
    kmat: DMatrix<f64>,
    lmat: DMatrix<f64>,
    evec: DVector<f64>,
    primitives: Vec<MotionPrimitive>,
}

/// Primitives keyed by active set, derived on first use.
///
/// Safe to share between threads; concurrent requests for distinct keys derive
/// independently.
#[derive(Debug)]
pub struct PrimitiveLibrary {
    form: Arc<BrunovskyForm>,
    entries: RwLock<HashMap<Vec<usize>, Arc<MotionPrimitive>>>,
}

impl PrimitiveLibrary {
    pub fn new(form: Arc<BrunovskyForm>) -> Self {
        Self { form, entries: RwLock::new(HashMap::new()) }
    }

    pub fn form(&self) -> &BrunovskyForm {
        &self.form
    }

    pub fn shared_form(&self) -> Arc<BrunovskyForm> {
        self.form.clone()
    }

    /// Fetch or derive the primitive for `active` (order-insensitive).
    pub fn get(&self, active: &[usize]) -> Result<Arc<MotionPrimitive>, PrimitiveError> {
        let mut key = active.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(p) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(MotionPrimitive::derive(&self.form, &key)?);
        let mut w = self.entries.write().expect("cache lock");
        Ok(w.entry(key).or_insert(p).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write all derived primitives as versioned JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PrimitiveError> {
        let entries = self.entries.read().expect("cache lock");
        let mut keys: Vec<&Vec<usize>> = entries.keys().collect();
        keys.sort();
        let file = CacheFile {
            version: CACHE_VERSION,
            chains: self.form.chains().to_vec(),
            horizon: self.form.horizon,
            kmat: self.form.kmat.clone(),
            lmat: self.form.lmat.clone(),
            evec: self.form.evec.clone(),
            primitives: keys.iter().map(|k| (*entries[*k]).clone()).collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| PrimitiveError::Cache(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| PrimitiveError::Cache(e.to_string()))
    }

    /// Load a cache written by [`save`](Self::save), checking it belongs to `form`
    /// and that every stored arc flow still satisfies the Euler–Lagrange equations.
    pub fn load(form: Arc<BrunovskyForm>, path: impl AsRef<Path>) -> Result<Self, PrimitiveError> {
        let text = std::fs::read_to_string(path).map_err(|e| PrimitiveError::Cache(e.to_string()))?;
        let file: CacheFile = serde_json::from_str(&text).map_err(|e| PrimitiveError::Cache(e.to_string()))?;
        if file.version != CACHE_VERSION {
            return Err(PrimitiveError::Cache(format!("unsupported version {}", file.version)));
        }
        let same =
            |a: &DMatrix<f64>, b: &DMatrix<f64>| a.shape() == b.shape() && (a - b).amax() <= 1e-14 * b.amax().max(1.0);
        if file.chains != form.chains()
            || file.horizon != form.horizon
            || !same(&file.kmat, &form.kmat)
            || !same(&file.lmat, &form.lmat)
            || file.evec != form.evec
        {
            return Err(PrimitiveError::Cache("cache was built for a different problem".into()));
        }
        let mut map = HashMap::new();
        for p in file.primitives {
            let defect = p.euler_lagrange_defect(&form);
            if defect.is_nan() || defect > 1e-8 {
                return Err(PrimitiveError::Cache(format!(
                    "primitive {:?} fails the Euler-Lagrange check ({defect:e})",
                    p.active_set
                )));
            }
            for c in &p.dynamics.components {
                for g in &c.groups {
                    let r = (&c.system * &g.basis - &g.basis * &g.generator).amax();
                    if r.is_nan() || r > 1e-7 * c.system.amax().max(1.0) {
                        return Err(PrimitiveError::Cache(format!(
                            "primitive {:?} has a stale mode split",
                            p.active_set
                        )));
                    }
                }
            }
            map.insert(p.active_set.clone(), Arc::new(p));
        }
        Ok(Self { form, entries: RwLock::new(map) })
    }
}

impl ComponentDynamics {
    /// Gradient of `z'Kz + μ'R̃z` with respect to this component's columns, as a map of `w`.
    pub fn gradient_map(&self, form: &BrunovskyForm, arc: &ArcDynamics) -> DMatrix<f64> {
        let cols = &self.columns;
        let k = DMatrix::from_fn(cols.len(), cols.len(), |i, j| form.kmat[(cols[i], cols[j])]);
        let row_idx: Vec<usize> =
            self.rows.iter().map(|r| arc.active_set.iter().position(|a| a == r).expect("row is active")).collect();
        let red = DMatrix::from_fn(row_idx.len(), cols.len(), |i, j| arc.reduced_rows[(row_idx[i], cols[j])]);
        k * 2.0 * self.z_map() + red.transpose() * &self.multiplier_map
    }

    /// Position of column `(chain, order)` inside this component's columns.
    pub fn local_column(&self, form: &BrunovskyForm, chain: usize, order: usize) -> usize {
        let col = form.layout.column(chain, order);
        self.columns.iter().position(|&c| c == col).expect("column belongs to component")
    }

    /// Euler–Lagrange operators `Σ_j (−1)^j F_{i,j} M^j` for each chain, with a scale for each.
    pub fn euler_lagrange_operators(&self, form: &BrunovskyForm, arc: &ArcDynamics) -> Vec<(DMatrix<f64>, f64)> {
        let f = self.gradient_map(form, arc);
        let d = self.dim();
        self.chains
            .iter()
            .map(|&i| {
                let k = form.layout.chains[i];
                let mut op = DMatrix::zeros(1, d);
                let mut scale = 0.0f64;
                let mut power = DMatrix::<f64>::identity(d, d);
                for j in 0..=k {
                    let row = f.row(self.local_column(form, i, j)) * &power;
                    scale = scale.max(row.amax());
                    if j % 2 == 0 {
                        op += row;
                    } else {
                        op -= row;
                    }
                    power = &power * &self.system;
                }
                (op, scale)
            })
            .collect()
    }

    /// Costate of `(chain, order)` as partial sums of signed gradient derivatives, as a row acting on `w`.
    pub fn costate_operator(
        &self,
        form: &BrunovskyForm,
        arc: &ArcDynamics,
        chain: usize,
        order: usize,
    ) -> DMatrix<f64> {
        let f = self.gradient_map(form, arc);
        let k = form.layout.chains[chain];
        let d = self.dim();
        let mut op = DMatrix::zeros(1, d);
        for (col_order, deriv, sign) in DerivativeOperator::new(k).shifted(order) {
            let power = self.system.pow(deriv as u32);
            op += f.row(self.local_column(form, chain, col_order)) * power * sign;
        }
        op
    }
}

#[cfg(test)]
mod tests;
