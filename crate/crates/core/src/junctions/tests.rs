use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::bench::{build_problem, SubmersibleScenario, CEILING, FLOOR};
use crate::model::{to_brunovsky, LqProblem};
use crate::primitives::PrimitiveLibrary;

fn library(p: &LqProblem) -> PrimitiveLibrary {
    PrimitiveLibrary::new(Arc::new(to_brunovsky(p).unwrap()))
}

fn double_integrator(x0: [f64; 2], xt: [f64; 2], ceiling: Option<f64>) -> LqProblem {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let (c, d, e) = match ceiling {
        Some(l) => (DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::zeros(1, 1), DVector::from_element(1, l)),
        None => (DMatrix::zeros(0, 2), DMatrix::zeros(0, 1), DVector::zeros(0)),
    };
    LqProblem::new(
        a,
        b,
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
fn double_integrator_rest_to_rest_costs_twelve() {
    let lib = library(&double_integrator([0.0, 0.0], [1.0, 0.0], None));
    let traj = solve_unconstrained(&lib).unwrap();
    // u = 6 − 12t on [0, 1]
    assert!((traj.energy() - 12.0).abs() < 1e-9, "{}", traj.energy());
    let mid = traj.evaluate(0.25).unwrap();
    assert!((mid.u[0] - 3.0).abs() < 1e-9);
    assert!((mid.x[0] - (3.0 * 0.0625 - 2.0 * 0.015625)).abs() < 1e-10);
}

#[test]
fn zero_boundary_values_give_zero_trajectory() {
    let lib = library(&double_integrator([0.0, 0.0], [0.0, 0.0], None));
    let traj = solve_unconstrained(&lib).unwrap();
    assert_eq!(traj.energy(), 0.0);
    for t in [0.0, 0.3, 1.0] {
        let p = traj.evaluate(t).unwrap();
        assert!(p.x.amax() < 1e-14 && p.lambda.amax() < 1e-14);
        for j in 0..2 {
            assert!(traj.arcs[0].costate(&traj.form, t, 0, j).abs() < 1e-14);
        }
    }
}

#[test]
fn costate_partial_sums_match_flow_costate() {
    let lib = library(&double_integrator([0.0, 0.0], [1.0, 0.0], None));
    let traj = solve_unconstrained(&lib).unwrap();
    for t in [0.1, 0.5, 0.9] {
        let p = traj.evaluate(t).unwrap();
        for j in 0..2 {
            let partial = traj.arcs[0].costate(&traj.form, t, 0, j);
            assert!((partial - p.lambda[j]).abs() < 1e-9, "order {j}: {partial} vs {}", p.lambda[j]);
        }
    }
}

#[test]
fn evaluate_rejects_times_outside_horizon() {
    let lib = library(&double_integrator([0.0, 0.0], [1.0, 0.0], None));
    let traj = solve_unconstrained(&lib).unwrap();
    assert!(matches!(traj.evaluate(1.5), Err(JunctionError::OutOfHorizon { .. })));
    assert!(matches!(traj.evaluate(-0.1), Err(JunctionError::OutOfHorizon { .. })));
}

#[test]
fn bryson_ho_state_constraint() {
    // x ≤ 1/9 with x(0)=0, v(0)=1, x(1)=0, v(1)=−1: boundary arc on [1/3, 2/3], ∫u² = 8
    let lib = library(&double_integrator([0.0, 1.0], [0.0, -1.0], Some(1.0 / 9.0)));
    let form = lib.shared_form();
    let specs = vec![JunctionSpec::entry(&form, &[0]).unwrap(), JunctionSpec::exit(&form, &[0]).unwrap()];
    let sys = assemble(&specs, &lib).unwrap();
    let (u, e) = sys.counts();
    assert_eq!(u, e);
    let traj = solve_junctions(&sys, Some(&[0.3, 0.7])).unwrap();
    let ts = traj.junction_times();
    assert!((ts[0] - 1.0 / 3.0).abs() < 1e-7 && (ts[1] - 2.0 / 3.0).abs() < 1e-7, "{ts:?}");
    assert!((traj.energy() - 8.0).abs() < 1e-6, "{}", traj.energy());
    let d = diagnose(&traj, 200);
    assert!(d.state_continuity < 1e-9 && d.costate_jump < 1e-8 && d.tangency < 1e-9, "{d:?}");
    assert!(d.hamiltonian_jump < 1e-8 && d.hamiltonian_spread < 1e-8, "{d:?}");
    assert!(d.max_violation < 1e-9, "{d:?}");
    assert!(d.multiplier_sign >= -1e-9, "{d:?}");
    // without a guess the seed grid finds the same solution
    let again = solve_junctions(&sys, None).unwrap();
    assert!((again.energy() - 8.0).abs() < 1e-6);
}

#[test]
fn sequence_validation() {
    let lib = library(&double_integrator([0.0, 1.0], [0.0, -1.0], Some(1.0 / 9.0)));
    let form = lib.shared_form();
    let entry = JunctionSpec::entry(&form, &[0]).unwrap();
    let exit = JunctionSpec::exit(&form, &[0]).unwrap();
    assert!(matches!(assemble(std::slice::from_ref(&entry), &lib), Err(JunctionError::InvalidSequence(_))));
    assert!(matches!(assemble(&[exit.clone(), entry.clone()], &lib), Err(JunctionError::InvalidSequence(_))));
    assert!(matches!(assemble(&[entry.clone(), entry], &lib), Err(JunctionError::InvalidSequence(_))));
    assert!(JunctionSpec::touch(&form, &[]).is_err());
}

#[test]
fn equation_counts_balance_per_junction() {
    let form = Arc::new(to_brunovsky(&build_problem(&SubmersibleScenario::perturbed())).unwrap());
    let lib = PrimitiveLibrary::new(form.clone());
    let n = form.states();
    let empty = assemble(&[], &lib).unwrap();
    assert_eq!(empty.count_of(EquationKind::InitialState) + empty.count_of(EquationKind::FinalState), 2 * n);
    assert_eq!(empty.count_of(EquationKind::Hamiltonian), 0);

    let touch = assemble(&[JunctionSpec::touch(&form, &[FLOOR]).unwrap()], &lib).unwrap();
    let (u, e) = touch.counts();
    assert_eq!(u, e);
    assert_eq!(touch.junction_increment(0), (2 * n + 1 + 1, 2 * n + 1 + 1));

    let interval =
        assemble(&[JunctionSpec::entry(&form, &[FLOOR]).unwrap(), JunctionSpec::exit(&form, &[FLOOR]).unwrap()], &lib)
            .unwrap();
    let (u, e) = interval.counts();
    assert_eq!(u, e);
    // entry carries the full floor stack (q = 3), exit carries none
    assert_eq!(interval.junction_increment(0), (2 * n + 3 + 1, 2 * n + 3 + 1));
    assert_eq!(interval.junction_increment(1), (2 * n + 1, 2 * n + 1));
    assert_eq!(interval.count_of(EquationKind::Hamiltonian), 2);
}

#[test]
fn submersible_nominal_unconstrained() {
    let s = SubmersibleScenario::nominal();
    let lib = library(&build_problem(&s));
    let traj = solve_unconstrained(&lib).unwrap();
    let e = traj.energy();
    // reference computed separately by quadrature of the closed-form chain solutions
    assert!((e - 8446.47).abs() < 0.05, "{e}");
    let start = traj.evaluate(0.0).unwrap();
    let end = traj.evaluate(80.0).unwrap();
    let x0 = &traj.form.problem.x0;
    let xt = &traj.form.problem.xt;
    assert!((&start.x - x0).amax() < 1e-9);
    assert!((&end.x - xt).amax() < 1e-6);
    assert!(traj.max_violation(10_000) < 0.0);
    let d = diagnose(&traj, 400);
    assert!(d.euler_lagrange < 1e-8, "{d:?}");
    assert!(d.hamiltonian_spread < 1e-6, "{d:?}");
}

#[test]
fn submersible_floor_touch() {
    let s = SubmersibleScenario::perturbed();
    let lib = library(&build_problem(&s));
    let form = lib.shared_form();
    let free = solve_unconstrained(&lib).unwrap();
    assert!(free.max_violation(10_000) > 0.1);

    let sys = assemble(&[JunctionSpec::touch(&form, &[FLOOR]).unwrap()], &lib).unwrap();
    let traj = solve_junctions(&sys, None).unwrap();
    let t1 = traj.junction_times()[0];
    assert!((t1 - 20.2378).abs() < 1e-3, "{t1}");
    assert!((traj.energy() - 8539.41).abs() < 0.05, "{}", traj.energy());
    let p = traj.evaluate(t1).unwrap();
    assert!(p.z[2].abs() < 1e-9 && p.z[3].abs() < 1e-7, "{:?}", p.z);
    let d = diagnose(&traj, 400);
    assert!(d.state_continuity < 1e-9 && d.costate_jump < 1e-8, "{d:?}");
    assert!(d.hamiltonian_jump < 1e-6, "{d:?}");
    assert!(d.max_violation < 1e-8, "{d:?}");

    // the x-chain is untouched by a floor junction
    for t in [5.0, 20.0, 40.0, 79.0] {
        let a = free.evaluate(t).unwrap();
        let b = traj.evaluate(t).unwrap();
        for i in [0, 1, 5] {
            assert!((a.z[i] - b.z[i]).abs() < 1e-9 * a.z[i].abs().max(1.0), "t={t} col {i}");
        }
    }
}

#[test]
fn submersible_ceiling_touch_is_feasible_and_costlier() {
    let s = SubmersibleScenario::perturbed();
    let lib = library(&build_problem(&s));
    let form = lib.shared_form();
    let floor =
        solve_junctions(&assemble(&[JunctionSpec::touch(&form, &[FLOOR]).unwrap()], &lib).unwrap(), None).unwrap();
    let ceil =
        solve_junctions(&assemble(&[JunctionSpec::touch(&form, &[CEILING]).unwrap()], &lib).unwrap(), None).unwrap();
    assert!(ceil.max_violation(10_000) < 1e-8);
    assert!(ceil.energy() > floor.energy());
}

#[test]
fn csv_export_has_header_and_rows() {
    let lib = library(&build_problem(&SubmersibleScenario::nominal()));
    let traj = solve_unconstrained(&lib).unwrap();
    let mut buf = Vec::new();
    write_csv(&traj, 11, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,p_x,v_x,p_y,v_y,beta,a_x,a_y,arc_index,active_set");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].ends_with(",0,none"));
    let first: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((first - 20.0).abs() < 1e-12);
}
