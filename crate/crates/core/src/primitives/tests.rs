use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::bench::{build_problem, SubmersibleScenario, CEILING, FLOOR, THRUST};
use crate::model::{to_brunovsky, BrunovskyForm, LqProblem};

fn submersible() -> BrunovskyForm {
    to_brunovsky(&build_problem(&SubmersibleScenario::nominal())).unwrap()
}

fn chain_problem(k: usize, c: DMatrix<f64>, d: DMatrix<f64>, e: Vec<f64>) -> BrunovskyForm {
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k - 1 {
        a[(i, i + 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(k, 1);
    b[(k - 1, 0)] = 1.0;
    let p = LqProblem::new(
        a,
        b,
        c,
        d,
        DVector::from_vec(e),
        DMatrix::zeros(k, k),
        DMatrix::identity(1, 1),
        DMatrix::zeros(k, 1),
        DVector::zeros(k),
        DVector::zeros(k),
        1.0,
    )
    .unwrap();
    to_brunovsky(&p).unwrap()
}

fn sorted_real(roots: &[Root]) -> Vec<f64> {
    let mut v: Vec<f64> = roots.iter().flat_map(|r| std::iter::repeat(r.re).take(r.multiplicity)).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn derivative_operator_alternates() {
    assert_eq!(DerivativeOperator::new(3).coeffs, vec![1.0, -1.0, 1.0, -1.0]);
    assert_eq!(DerivativeOperator::new(2).shifted(0), vec![(1, 0, -1.0), (2, 1, 1.0)]);
    assert_eq!(DerivativeOperator::new(2).shifted(1), vec![(2, 0, -1.0)]);
}

#[test]
fn submersible_unconstrained_odes() {
    let f = submersible();
    let x = derive_ode(&f, 0, &[]).unwrap();
    assert_eq!(x.lhs_coeffs, vec![0.0, 0.0, -135.0, 0.0, 20.0]);
    assert!(x.is_homogeneous());
    let y = derive_ode(&f, 1, &[]).unwrap();
    assert_eq!(y.lhs_coeffs, vec![0.0, 0.0, -2.0, 0.0, 125.0, 0.0, -20.0]);
    assert!(y.coupling_coeffs.is_empty() && x.coupling_coeffs.is_empty());
}

#[test]
fn trivial_chain_ode() {
    let f = chain_problem(2, DMatrix::zeros(0, 2), DMatrix::zeros(0, 1), vec![]);
    let ode = derive_ode(&f, 0, &[]).unwrap();
    assert_eq!(ode.lhs_coeffs, vec![0.0, 0.0, 0.0, 0.0, 2.0]);
    let basis = characteristic_roots(&ode).unwrap();
    assert_eq!(basis.roots, vec![Root { re: 0.0, im: 0.0, multiplicity: 4 }]);
    assert_eq!(basis.dimension, 4);
}

#[test]
fn submersible_roots() {
    let f = submersible();
    let bx = characteristic_roots(&derive_ode(&f, 0, &[]).unwrap()).unwrap();
    let r = sorted_real(&bx.roots);
    let k = (2.5f64 * 2.5 + 5.0 / 10.0).sqrt();
    assert_eq!(bx.dimension, 4);
    assert!((r[0] + k).abs() < 1e-12 && r[1] == 0.0 && r[2] == 0.0 && (r[3] - k).abs() < 1e-12);
    assert!((k - 2.598076).abs() < 1e-6);

    let by = characteristic_roots(&derive_ode(&f, 1, &[]).unwrap()).unwrap();
    assert_eq!(by.dimension, 6);
    let r = sorted_real(&by.roots);
    // λ⁴ − b²λ² + k₂/c₂ = 0
    let disc = (2.5f64.powi(4) - 4.0 * 0.1).sqrt();
    let big = ((6.25 + disc) / 2.0).sqrt();
    let small = ((6.25 - disc) / 2.0).sqrt();
    let expect = [-big, -small, 0.0, 0.0, small, big];
    for (a, b) in r.iter().zip(expect) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!((big - 2.4968).abs() < 1e-4 && (small - 0.12668).abs() < 1e-4);
    // basis completeness
    let w = by.wronskian(0.0);
    assert!(crate::linalg::condition_number(&w).is_finite());
}

#[test]
fn arc_flow_spectrum_matches_chain_roots() {
    let f = submersible();
    let p = MotionPrimitive::derive(&f, &[]).unwrap();
    assert_eq!(p.dynamics.components.len(), 2);
    for comp in &p.dynamics.components {
        let chain = comp.chains[0];
        let roots = sorted_real(&p.bases[chain].as_ref().unwrap().roots);
        let mut eig: Vec<f64> = comp.eigenvalues.iter().map(|e| e.0).collect();
        eig.sort_by(f64::total_cmp);
        // flow adds one zero for the affine coordinate; zero clusters spread numerically
        let nonzero_r: Vec<f64> = roots.iter().copied().filter(|r| r.abs() > 1e-6).collect();
        let nonzero_e: Vec<f64> = eig.iter().copied().filter(|r| r.abs() > 1e-3).collect();
        assert_eq!(eig.len(), roots.len() + 1);
        assert_eq!(nonzero_r.len(), nonzero_e.len());
        for (a, b) in nonzero_r.iter().zip(&nonzero_e) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn submersible_has_six_primitives() {
    let f = submersible();
    let en = enumerate_with_pruning(&f);
    let sets: Vec<Vec<usize>> = en.primitives.iter().map(|p| p.active_set.clone()).collect();
    assert_eq!(
        sets,
        vec![vec![], vec![FLOOR], vec![CEILING], vec![THRUST], vec![FLOOR, THRUST], vec![CEILING, THRUST]]
    );
    assert_eq!(en.pruned.len(), 2);
    for (set, why) in &en.pruned {
        assert!(set.contains(&FLOOR) && set.contains(&CEILING));
        assert!(matches!(why, PrimitiveError::InfeasibleActiveSet { .. }));
    }
    for p in &en.primitives {
        assert!(p.euler_lagrange_defect(&f) <= 1e-8, "{:?}", p.active_set);
    }
}

#[test]
fn dependent_rows_are_pruned() {
    // two bounds on the same control: consistent equalities are impossible to hold jointly only when offsets differ
    let f = chain_problem(1, DMatrix::zeros(2, 1), DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), vec![1.0, 2.0]);
    let en = enumerate_with_pruning(&f);
    assert_eq!(en.primitives.len(), 3);
    assert!(matches!(en.pruned[0].1, PrimitiveError::DependentActiveSet { .. }));
}

#[test]
fn enumeration_counts() {
    let none = chain_problem(2, DMatrix::zeros(0, 2), DMatrix::zeros(0, 1), vec![]);
    assert_eq!(enumerate_primitives(&none).len(), 1);
    let one = chain_problem(2, DMatrix::zeros(1, 2), DMatrix::from_element(1, 1, 1.0), vec![0.5]);
    assert_eq!(enumerate_primitives(&one).len(), 2);
}

#[test]
fn floor_pins_the_vertical_chain() {
    let f = submersible();
    let ode = derive_ode(&f, 1, &[FLOOR]).unwrap();
    assert_eq!(ode.pinned_states, vec![(2, 0.0), (3, 0.0), (4, 0.0)]);
    assert!(ode.fully_pinned);
    assert_eq!(ode.characteristic_polynomial(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let ceil = derive_ode(&f, 1, &[CEILING]).unwrap();
    assert_eq!(ceil.pinned_states, vec![(2, 25.0), (3, 0.0), (4, 0.0)]);

    let law = eliminate_multipliers(&ode, &f).unwrap();
    assert_eq!(law.rows, vec![FLOOR]);
    // on the floor the vertical control vanishes whatever the costate
    let p = MotionPrimitive::derive(&f, &[FLOOR]).unwrap();
    let comp = &p.dynamics.components[law.component];
    let pinned = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.3, -1.2, 0.7, 1.0]);
    let a_y = (&comp.control_map * &pinned)[0];
    assert!(a_y.abs() < 1e-14);
}

#[test]
fn control_equality_multiplier_is_constant() {
    // ẋ = a, J = a², a ≤ 0.5 held active: μ = −2a − λ with λ constant
    let f = chain_problem(1, DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0), vec![0.5]);
    let ode = derive_ode(&f, 0, &[0]).unwrap();
    let law = eliminate_multipliers(&ode, &f).unwrap();
    let p = MotionPrimitive::derive(&f, &[0]).unwrap();
    let comp = &p.dynamics.components[0];
    // d/dt μ = μ-map · M w must vanish for every w
    let dmu = &law.map * &comp.system;
    assert!(dmu.amax() < 1e-14);
    let w = DVector::from_vec(vec![0.2, -0.4, 1.0]);
    let mu = (&law.map * &w)[0];
    assert!((mu - (-2.0 * 0.5 + 0.4)).abs() < 1e-14);
}

#[test]
fn empty_active_set_has_no_multipliers() {
    let f = submersible();
    let ode = derive_ode(&f, 0, &[]).unwrap();
    let law = eliminate_multipliers(&ode, &f).unwrap();
    assert!(law.rows.is_empty() && law.map.nrows() == 0);
}

#[test]
fn thrust_row_polynomial() {
    let f = submersible();
    let ode = derive_ode(&f, 0, &[THRUST]).unwrap();
    // det = −(b s − s²)(−b s − s²) = b² s² − s⁴
    let poly = ode.characteristic_polynomial();
    let expect = [0.0, 0.0, 6.25, 0.0, -1.0];
    for (a, b) in poly.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    let roots = sorted_real(&characteristic_roots(&ode).unwrap().roots);
    assert!((roots[0] + 2.5).abs() < 1e-12 && (roots[3] - 2.5).abs() < 1e-12);
}

#[test]
fn cache_round_trip_and_tamper_detection() {
    let form = Arc::new(submersible());
    let lib = PrimitiveLibrary::new(form.clone());
    lib.get(&[]).unwrap();
    lib.get(&[THRUST, FLOOR]).unwrap();
    assert_eq!(lib.len(), 2);
    let dir = std::env::temp_dir().join(format!("lqmp-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("prims.json");
    lib.save(&path).unwrap();
    let loaded = PrimitiveLibrary::load(form.clone(), &path).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(*loaded.get(&[FLOOR, THRUST]).unwrap(), *lib.get(&[FLOOR, THRUST]).unwrap());

    let text = std::fs::read_to_string(&path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let sys = &mut v["primitives"][0]["dynamics"]["components"][0]["control_map"][0];
    let first = sys[0].as_f64().unwrap();
    sys[0] = serde_json::json!(first + 0.5);
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(PrimitiveLibrary::load(form.clone(), &path), Err(PrimitiveError::Cache(_))));

    let other = Arc::new(
        to_brunovsky(&build_problem(&SubmersibleScenario { horizon: 60.0, ..SubmersibleScenario::nominal() })).unwrap(),
    );
    lib.save(&path).unwrap();
    assert!(matches!(PrimitiveLibrary::load(other, &path), Err(PrimitiveError::Cache(_))));
    std::fs::remove_dir_all(&dir).ok();
}
