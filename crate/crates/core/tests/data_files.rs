use std::path::Path;

use lqmp::bench::{build_problem, SubmersibleScenario};
use lqmp::model::LqProblem;

fn load(name: &str) -> LqProblem {
    LqProblem::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)).unwrap()
}

#[test]
fn submersible_files_match_the_builder() {
    for (name, s) in [
        ("submersible_nominal.json", SubmersibleScenario::nominal()),
        ("submersible_perturbed.json", SubmersibleScenario::perturbed()),
    ] {
        let file = load(name);
        let built = build_problem(&s);
        assert_eq!(file.coordinates, built.coordinates, "{name}");
        assert_eq!(file.constraint_names, built.constraint_names);
        for (a, b) in [
            (&file.a, &built.a),
            (&file.b, &built.b),
            (&file.c, &built.c),
            (&file.d, &built.d),
            (&file.q, &built.q),
            (&file.r, &built.r),
            (&file.n, &built.n),
        ] {
            assert_eq!(a, b, "{name}");
        }
        assert_eq!(file.e, built.e);
        assert_eq!(file.x0, built.x0);
        assert_eq!(file.xt, built.xt);
        assert_eq!(file.horizon, built.horizon);
    }
}

#[test]
fn small_problems_parse() {
    let di = load("double_integrator.json");
    assert_eq!((di.state_dim(), di.input_dim(), di.constraint_count()), (2, 1, 0));
    let bh = load("bryson_ho.json");
    assert_eq!(bh.constraint_names, ["wall"]);
    assert!((bh.e[0] - 1.0 / 9.0).abs() < 1e-16);
}
