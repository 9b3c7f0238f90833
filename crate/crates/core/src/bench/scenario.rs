use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::LqProblem;

/// Physical constants of the submersible model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubmersibleParams {
    /// Weight on the horizontal thrust.
    pub c1: f64,
    /// Weight on the buoyancy rate.
    pub c2: f64,
    /// Weight on the horizontal speed.
    pub k1: f64,
    /// Weight on the vertical speed.
    pub k2: f64,
    /// Horizontal drag coefficient.
    pub bx: f64,
    /// Vertical drag coefficient.
    pub by: f64,
    /// Cave height (m).
    pub h: f64,
    /// Minimum forward thrust (N/kg).
    pub t_min: f64,
}

impl Default for SubmersibleParams {
    fn default() -> Self {
        Self { c1: 10.0, c2: 10.0, k1: 5.0, k2: 1.0, bx: 2.5, by: 2.5, h: 25.0, t_min: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Nominal,
    Perturbed,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nominal" => Ok(Self::Nominal),
            "perturbed" => Ok(Self::Perturbed),
            other => Err(format!("unknown variant `{other}` (expected nominal or perturbed)")),
        }
    }
}

/// State of the vehicle in chain coordinates: position, speed and net vertical force per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubmersibleState {
    pub px: f64,
    pub vx: f64,
    pub py: f64,
    pub vy: f64,
    /// Net vertical acceleration `β = B − b_y v_y`.
    pub beta: f64,
}

impl SubmersibleState {
    fn to_vec(self) -> DVector<f64> {
        DVector::from_vec(vec![self.px, self.vx, self.py, self.vy, self.beta])
    }
}

/// A complete cave-crossing scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubmersibleScenario {
    pub params: SubmersibleParams,
    pub initial: SubmersibleState,
    pub target: SubmersibleState,
    pub horizon: f64,
    pub variant: Variant,
}

impl SubmersibleScenario {
    pub fn nominal() -> Self {
        Self {
            params: SubmersibleParams::default(),
            initial: SubmersibleState { px: 0.0, vx: 1.0, py: 20.0, vy: 0.0, beta: 0.0 },
            target: SubmersibleState { px: 100.0, vx: 1.0, py: 1.0, vy: 0.0, beta: 0.0 },
            horizon: 80.0,
            variant: Variant::Nominal,
        }
    }

    /// Nominal scenario with a downward initial velocity and net buoyancy.
    pub fn perturbed() -> Self {
        let mut s = Self::nominal();
        s.initial.vy = -3.0;
        s.initial.beta = -1.0;
        s.variant = Variant::Perturbed;
        s
    }

    pub fn of(variant: Variant) -> Self {
        match variant {
            Variant::Nominal => Self::nominal(),
            Variant::Perturbed => Self::perturbed(),
        }
    }
}

/// Index of the floor constraint row.
pub const FLOOR: usize = 0;
/// Index of the ceiling constraint row.
pub const CEILING: usize = 1;
/// Index of the minimum-thrust constraint row.
pub const THRUST: usize = 2;

fn cost_blocks(p: &SubmersibleParams, cross_factor: f64) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(7, 7);
    k[(1, 1)] = p.c1 * p.bx * p.bx + p.k1;
    k[(1, 5)] = cross_factor * p.c1 * p.bx;
    k[(5, 1)] = cross_factor * p.c1 * p.bx;
    k[(5, 5)] = p.c1;
    k[(3, 3)] = p.k2;
    k[(4, 4)] = p.c2 * p.by * p.by;
    k[(4, 6)] = cross_factor * p.c2 * p.by;
    k[(6, 4)] = cross_factor * p.c2 * p.by;
    k[(6, 6)] = p.c2;
    k
}

/// Cost matrix over `z = [x, v_x, y, v_y, β, a_x, a_y]` whose quadratic form equals the running cost.
pub fn cost_matrix(p: &SubmersibleParams) -> DMatrix<f64> {
    cost_blocks(p, 1.0)
}

/// The cost matrix as usually printed for this model, with the cross entries
/// `2c₁b_x` and `2c₂b_y` written into both symmetric positions.
///
/// Its quadratic form differs from the running cost by
/// `2c₁b_x v_x a_x + 2c₂b_y β a_y`, an exact time derivative, so over a fixed
/// horizon it shifts the energy by `c₁b_x Δ(v_x²) + c₂b_y Δ(β²)`.
pub fn displayed_cost_matrix(p: &SubmersibleParams) -> DMatrix<f64> {
    cost_blocks(p, 2.0)
}

/// Constant offset between the printed-matrix energy and the running-cost energy.
pub fn displayed_energy_offset(s: &SubmersibleScenario) -> f64 {
    let p = &s.params;
    p.c1 * p.bx * (s.target.vx.powi(2) - s.initial.vx.powi(2))
        + p.c2 * p.by * (s.target.beta.powi(2) - s.initial.beta.powi(2))
}

/// The scenario as an LQ problem in chain coordinates.
pub fn build_problem(s: &SubmersibleScenario) -> LqProblem {
    let p = &s.params;
    let mut a = DMatrix::zeros(5, 5);
    a[(0, 1)] = 1.0;
    a[(2, 3)] = 1.0;
    a[(3, 4)] = 1.0;
    let mut b = DMatrix::zeros(5, 2);
    b[(1, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    let k = cost_matrix(p);
    let c =
        DMatrix::from_row_slice(3, 5, &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -p.bx, 0.0, 0.0, 0.0]);
    let d = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
    LqProblem::new(
        a,
        b,
        c,
        d,
        DVector::from_vec(vec![0.0, p.h, -p.t_min]),
        k.view((0, 0), (5, 5)).into_owned(),
        k.view((5, 5), (2, 2)).into_owned(),
        k.view((0, 5), (5, 2)).into_owned(),
        s.initial.to_vec(),
        s.target.to_vec(),
        s.horizon,
    )
    .expect("consistent shapes")
    .in_brunovsky_coordinates()
    .with_names(&["p_x", "v_x", "p_y", "v_y", "beta"], &["a_x", "a_y"], &["floor", "ceiling", "thrust"])
    .expect("consistent names")
}

/// The scenario in physical coordinates `x = [p_x, v_x, p_y, v_y, B]`, `u = [u_x, u_y]`.
pub fn physical_problem(s: &SubmersibleScenario) -> LqProblem {
    let p = &s.params;
    let mut a = DMatrix::zeros(5, 5);
    a[(0, 1)] = 1.0;
    a[(1, 1)] = -p.bx;
    a[(2, 3)] = 1.0;
    a[(3, 3)] = -p.by;
    a[(3, 4)] = 1.0;
    let mut b = DMatrix::zeros(5, 2);
    b[(1, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, p.k1, 0.0, p.k2, 0.0]));
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![p.c1, p.c2]));
    let c =
        DMatrix::from_row_slice(3, 5, &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let d = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
    let phys = |st: &SubmersibleState| DVector::from_vec(vec![st.px, st.vx, st.py, st.vy, st.beta + p.by * st.vy]);
    LqProblem::new(
        a,
        b,
        c,
        d,
        DVector::from_vec(vec![0.0, p.h, -p.t_min]),
        q,
        r,
        DMatrix::zeros(5, 2),
        phys(&s.initial),
        phys(&s.target),
        s.horizon,
    )
    .expect("consistent shapes")
    .with_names(&["p_x", "v_x", "p_y", "v_y", "B"], &["u_x", "u_y"], &["floor", "ceiling", "thrust"])
    .expect("consistent names")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{chain_slices, to_brunovsky, validate};

    #[test]
    fn physical_model_validates() {
        let p = physical_problem(&SubmersibleScenario::nominal());
        assert!(validate(&p).unwrap().all_passed());
        assert!(validate(&build_problem(&SubmersibleScenario::perturbed())).unwrap().all_passed());
    }

    #[test]
    fn physical_model_transforms_to_printed_layout() {
        let form = to_brunovsky(&physical_problem(&SubmersibleScenario::nominal())).unwrap();
        assert_eq!(form.chains(), &[2, 3]);
        let canon = build_problem(&SubmersibleScenario::nominal());
        assert!((&form.kmat - canon.cost_matrix()).amax() < 1e-12);
        assert!((&form.lmat - canon.constraint_matrix()).amax() < 1e-12);
        assert!((&form.evec - &canon.e).amax() == 0.0);
        assert!((&form.s0 - &canon.x0).amax() < 1e-12);
        let printed = displayed_cost_matrix(&SubmersibleParams::default());
        for i in 0..7 {
            for j in 0..7 {
                let cross = matches!((i, j), (1, 5) | (5, 1) | (4, 6) | (6, 4));
                let expect = if cross { printed[(i, j)] / 2.0 } else { printed[(i, j)] };
                assert!((form.kmat[(i, j)] - expect).abs() < 1e-12, "({i},{j})");
            }
        }
        let slices = chain_slices(&form);
        assert_eq!(slices, vec![vec![0, 1, 5], vec![2, 3, 4, 6]]);
    }

    #[test]
    fn printed_matrix_entries() {
        let k = displayed_cost_matrix(&SubmersibleParams::default());
        assert_eq!(k[(1, 1)], 67.5);
        assert_eq!(k[(1, 5)], 50.0);
        assert_eq!(k[(4, 6)], 50.0);
        let p = build_problem(&SubmersibleScenario::nominal());
        assert_eq!(p.e.as_slice(), &[0.0, 25.0, -1.0]);
        assert_eq!(
            p.constraint_matrix().row(2).iter().copied().collect::<Vec<_>>(),
            vec![0.0, -2.5, 0.0, 0.0, 0.0, -1.0, 0.0]
        );
    }

    #[test]
    fn no_drag_removes_cross_terms() {
        let params = SubmersibleParams { bx: 0.0, by: 0.0, ..Default::default() };
        let s = SubmersibleScenario { params, ..SubmersibleScenario::nominal() };
        assert_eq!(build_problem(&s).n, DMatrix::zeros(5, 2));
        assert_eq!(displayed_cost_matrix(&params).view((0, 5), (5, 2)).amax(), 0.0);
    }

    #[test]
    fn energy_offset_of_variants() {
        assert_eq!(displayed_energy_offset(&SubmersibleScenario::nominal()), 0.0);
        assert_eq!(displayed_energy_offset(&SubmersibleScenario::perturbed()), -25.0);
    }
}
