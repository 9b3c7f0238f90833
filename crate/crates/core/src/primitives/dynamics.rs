//! First-order form of the optimality conditions on one arc.
//!
//! For a fixed active set the stationarity condition and the reduced active
//! constraints determine the control and the multipliers as affine functions of
//! `w = [s; λ; 1]`. Substituting them into `ṡ = As + Ba` and
//! `λ̇ = −∂H/∂s` gives a linear system `ẇ = M w`.
//!
//! Chains that share no cost or constraint coupling form separate components,
//! each with its own `w`. The flow of each component is split into a part that
//! is propagated forward from the arc start and a part propagated backward from
//! the arc end, so that growing modes never blow up across long arcs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PrimitiveError;
use crate::linalg;
use crate::model::BrunovskyForm;
use crate::tangency::TangencyStack;

/// Left-group modes with `Re λ · T` above this are moved to the end-anchored group.
const GROWTH_LIMIT: f64 = 8.0;

/// Where a group of modes is anchored on the arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Start,
    End,
}

/// Invariant subspace of the arc flow with its restricted generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGroup {
    pub anchor: Anchor,
    /// Orthonormal basis (`d × r`).
    pub basis: DMatrix<f64>,
    /// Restricted generator (`r × r`), `M · basis = basis · generator`.
    pub generator: DMatrix<f64>,
}

/// Arc flow of one group of coupled chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDynamics {
    pub chains: Vec<usize>,
    /// Indices into `s` owned by this component.
    pub states: Vec<usize>,
    /// Active constraint rows owned by this component.
    pub rows: Vec<usize>,
    /// Columns of `z` owned by this component (states then controls).
    pub columns: Vec<usize>,
    /// `ẇ = system · w` with `w = [s_c; λ_c; 1]`.
    pub system: DMatrix<f64>,
    /// Controls as a linear function of `w`.
    pub control_map: DMatrix<f64>,
    /// Multipliers of the reduced active rows as a linear function of `w`.
    pub multiplier_map: DMatrix<f64>,
    pub groups: Vec<ModeGroup>,
    /// Spectrum of `system` as `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

impl ComponentDynamics {
    /// Length of `w`.
    pub fn dim(&self) -> usize {
        self.system.nrows()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Matrix `P(t)` with `w(t) = P(t) c` on the arc `[ta, tb]`.
    pub fn propagator(&self, t: f64, ta: f64, tb: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let mut col = 0;
        for g in &self.groups {
            let r = g.generator.ncols();
            let dt = match g.anchor {
                Anchor::Start => t - ta,
                Anchor::End => t - tb,
            };
            let block = &g.basis * (&g.generator * dt).exp();
            out.view_mut((0, col), (d, r)).copy_from(&block);
            col += r;
        }
        out
    }

    /// Map from `w` to this component's slice of `z`.
    pub fn z_map(&self) -> DMatrix<f64> {
        let (nc, mc, d) = (self.states.len(), self.chains.len(), self.dim());
        let mut out = DMatrix::zeros(nc + mc, d);
        for i in 0..nc {
            out[(i, i)] = 1.0;
        }
        out.view_mut((nc, 0), (mc, d)).copy_from(&self.control_map);
        out
    }
}

/// Arc flow for a full active set: one [`ComponentDynamics`] per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcDynamics {
    pub active_set: Vec<usize>,
    pub components: Vec<ComponentDynamics>,
    /// Reduced active rows over `z` (one per active constraint, in `active_set` order).
    pub reduced_rows: DMatrix<f64>,
    pub reduced_offsets: DVector<f64>,
}

impl ArcDynamics {
    /// Total number of free coefficients of an arc (including the normalization coordinates).
    pub fn coeff_dim(&self) -> usize {
        self.components.iter().map(|c| c.dim()).sum()
    }

    /// Offsets of each component inside the coefficient vector.
    pub fn coeff_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.components
            .iter()
            .map(|c| {
                let o = acc;
                acc += c.dim();
                o
            })
            .collect()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let r = self.find(self.0[i]);
            self.0[i] = r;
        }
        self.0[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Build the arc flow for the given active rows and their tangency stacks.
pub fn arc_dynamics(
    form: &BrunovskyForm,
    active: &[usize],
    stacks: &[TangencyStack],
) -> Result<ArcDynamics, PrimitiveError> {
    let (n, m) = (form.states(), form.inputs());
    let layout = &form.layout;
    let width = n + m;
    let mut reduced = DMatrix::zeros(active.len(), width);
    let mut offsets = DVector::zeros(active.len());
    for (k, st) in stacks.iter().enumerate() {
        reduced.set_row(k, &st.reduced.transpose());
        offsets[k] = st.reduced_offset;
    }

    let kscale = form.kmat.amax().max(1.0);
    let mut uf = UnionFind((0..m).collect());
    for c1 in 0..width {
        for c2 in 0..width {
            if form.kmat[(c1, c2)].abs() > 1e-14 * kscale {
                uf.union(layout.owner(c1).0, layout.owner(c2).0);
            }
        }
    }
    for k in 0..active.len() {
        let touched: Vec<usize> = (0..width).filter(|&c| reduced[(k, c)] != 0.0).map(|c| layout.owner(c).0).collect();
        for w in touched.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut roots: Vec<usize> = (0..m).map(|i| uf.find(i)).collect();
    roots.sort_unstable();
    roots.dedup();

    let mut components = Vec::new();
    for root in roots {
        let chains: Vec<usize> = (0..m).filter(|&i| uf.find(i) == root).collect();
        let states: Vec<usize> = chains
            .iter()
            .flat_map(|&i| (0..layout.chains[i]).map(move |j| (i, j)))
            .map(|(i, j)| layout.state_index(i, j))
            .collect();
        let rows: Vec<usize> = (0..active.len())
            .filter(|&k| (0..width).any(|c| reduced[(k, c)] != 0.0 && chains.contains(&layout.owner(c).0)))
            .collect();
        let mut columns = states.clone();
        columns.extend(chains.iter().map(|&i| n + i));
        let comp = component(form, &chains, &states, &columns, &rows, &reduced, &offsets, active)?;
        components.push(comp);
    }
    Ok(ArcDynamics { active_set: active.to_vec(), components, reduced_rows: reduced, reduced_offsets: offsets })
}

#[allow(clippy::too_many_arguments)]
fn component(
    form: &BrunovskyForm,
    chains: &[usize],
    states: &[usize],
    columns: &[usize],
    rows: &[usize],
    reduced: &DMatrix<f64>,
    offsets: &DVector<f64>,
    active: &[usize],
) -> Result<ComponentDynamics, PrimitiveError> {
    let n = form.states();
    let (nc, mc, rc) = (states.len(), chains.len(), rows.len());
    let d = 2 * nc + 1;
    let pick = |m: &DMatrix<f64>, r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])]);
    let controls: Vec<usize> = chains.iter().map(|&i| n + i).collect();
    let q = pick(&form.kmat, states, states);
    let nn = pick(&form.kmat, states, &controls);
    let r = pick(&form.kmat, &controls, &controls);
    let a_full = form.a_canonical();
    let b_full = form.b_canonical();
    let a = pick(&a_full, states, states);
    let b = DMatrix::from_fn(nc, mc, |i, j| b_full[(states[i], chains[j])]);
    let rs = pick(reduced, rows, states);
    let ra = pick(reduced, rows, &controls);

    // [[2R, Ra'], [Ra, 0]] [a; μ] = [−2N's − B'λ; ẽ − Rs s]
    let mut kkt = DMatrix::zeros(mc + rc, mc + rc);
    kkt.view_mut((0, 0), (mc, mc)).copy_from(&(&r * 2.0));
    kkt.view_mut((0, mc), (mc, rc)).copy_from(&ra.transpose());
    kkt.view_mut((mc, 0), (rc, mc)).copy_from(&ra);
    if rc > 0 && linalg::rank(&ra, 1e-10) < rc {
        return Err(PrimitiveError::DependentActiveSet { rows: rows.iter().map(|&k| active[k]).collect() });
    }
    let mut rhs = DMatrix::zeros(mc + rc, d);
    rhs.view_mut((0, 0), (mc, nc)).copy_from(&(-(nn.transpose() * 2.0)));
    rhs.view_mut((0, nc), (mc, nc)).copy_from(&(-b.transpose()));
    rhs.view_mut((mc, 0), (rc, nc)).copy_from(&(-&rs));
    for (i, &k) in rows.iter().enumerate() {
        rhs[(mc + i, d - 1)] = offsets[k];
    }
    let sol = linalg::solve(&kkt, &rhs)
        .ok_or_else(|| PrimitiveError::DependentActiveSet { rows: rows.iter().map(|&k| active[k]).collect() })?;
    let control_map = sol.rows(0, mc).into_owned();
    let multiplier_map = sol.rows(mc, rc).into_owned();

    let mut sel_s = DMatrix::zeros(nc, d);
    let mut sel_l = DMatrix::zeros(nc, d);
    for i in 0..nc {
        sel_s[(i, i)] = 1.0;
        sel_l[(i, nc + i)] = 1.0;
    }
    let sdot = &a * &sel_s + &b * &control_map;
    let ldot =
        -(&q * 2.0 * &sel_s + &nn * 2.0 * &control_map + a.transpose() * &sel_l + rs.transpose() * &multiplier_map);
    let mut system = DMatrix::zeros(d, d);
    system.view_mut((0, 0), (nc, d)).copy_from(&sdot);
    system.view_mut((nc, 0), (nc, d)).copy_from(&ldot);

    let eig = linalg::eigenvalues(&system);
    let eigenvalues: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    let groups = split_groups(&system, &eigenvalues, form.horizon)?;
    Ok(ComponentDynamics {
        chains: chains.to_vec(),
        states: states.to_vec(),
        rows: rows.iter().map(|&k| active[k]).collect(),
        columns: columns.to_vec(),
        system,
        control_map,
        multiplier_map,
        groups,
        eigenvalues,
    })
}

fn split_groups(system: &DMatrix<f64>, eig: &[(f64, f64)], horizon: f64) -> Result<Vec<ModeGroup>, PrimitiveError> {
    let d = system.nrows();
    let limit = GROWTH_LIMIT / horizon;
    let mut re: Vec<f64> = eig.iter().map(|e| e.0).collect();
    re.sort_by(f64::total_cmp);
    let whole = |anchor| vec![ModeGroup { anchor, basis: DMatrix::identity(d, d), generator: system.clone() }];
    if re.last().copied().unwrap_or(0.0) <= limit {
        return Ok(whole(Anchor::Start));
    }
    // widest gap with every left-group mode growing by at most e^GROWTH_LIMIT
    let mut best: Option<(f64, f64)> = None;
    for k in 0..re.len() - 1 {
        if re[k] > limit {
            break;
        }
        let gap = re[k + 1] - re[k];
        if re[k + 1] > 0.0 && best.map_or(true, |(g, _)| gap > g) {
            best = Some((gap, 0.5 * (re[k] + re[k + 1])));
        }
    }
    let (gap, gamma) = best.ok_or(PrimitiveError::SpectralSplit)?;
    let scale = system.norm().max(1.0);
    if gap < 1e-9 * scale {
        return Err(PrimitiveError::SpectralSplit);
    }
    let shifted = system - DMatrix::identity(d, d) * gamma;
    let sign = linalg::matrix_sign(&shifted).ok_or(PrimitiveError::SpectralSplit)?;
    let left_dim = re.iter().filter(|&&x| x < gamma).count();
    let id = DMatrix::<f64>::identity(d, d);
    let mut groups = Vec::new();
    for (anchor, proj, dim) in
        [(Anchor::Start, (&id - &sign) * 0.5, left_dim), (Anchor::End, (&id + &sign) * 0.5, d - left_dim)]
    {
        if dim == 0 {
            continue;
        }
        let basis = linalg::column_basis(&proj, dim);
        let generator = basis.transpose() * system * &basis;
        let resid = (system * &basis - &basis * &generator).norm();
        if resid > 1e-7 * scale {
            return Err(PrimitiveError::SpectralSplit);
        }
        groups.push(ModeGroup { anchor, basis, generator });
    }
    Ok(groups)
}
