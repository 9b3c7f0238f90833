use std::io::Write;

use serde::Serialize;

use super::{JunctionError, Trajectory};

/// Residuals of the optimality conditions on a solved trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub energy: f64,
    /// Largest Euler–Lagrange residual over arcs and samples.
    pub euler_lagrange: f64,
    /// Largest variation of the Hamiltonian along any single arc.
    pub hamiltonian_spread: f64,
    /// Largest `|H⁻ − H⁺|` over junctions.
    pub hamiltonian_jump: f64,
    pub state_continuity: f64,
    /// Largest `|λ⁻ − λ⁺ − N'π|` over junctions.
    pub costate_jump: f64,
    /// Largest tangency residual at entries and touches.
    pub tangency: f64,
    /// Largest deviation from the boundary states.
    pub boundary: f64,
    /// Largest `Lz − e` over the samples (negative when strictly feasible).
    pub max_violation: f64,
    /// Most negative sign-adjusted multiplier derivative `(−1)^j μ^(j)`, `j ≤ q`,
    /// over constrained arcs; zero when no row is active on an arc.
    pub multiplier_sign: f64,
}

/// Evaluate every optimality residual, sampling each arc at `samples` points.
pub fn diagnose(traj: &Trajectory, samples: usize) -> Diagnostics {
    let form = &*traj.form;
    let samples = samples.max(2);
    let mut el: f64 = 0.0;
    let mut spread: f64 = 0.0;
    let mut sign: f64 = 0.0;
    for arc in &traj.arcs {
        let ts: Vec<f64> =
            (0..samples).map(|i| arc.t_start + (arc.t_end - arc.t_start) * i as f64 / (samples - 1) as f64).collect();
        let hs: Vec<f64> = ts.iter().map(|&t| arc.hamiltonian(form, t)).collect();
        let (lo, hi) = hs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        spread = spread.max(hi - lo);
        for &t in &ts {
            el = el.max(arc.euler_lagrange_residual(form, t));
        }
        for (k, stack) in arc.primitive.stacks.iter().enumerate() {
            for j in 0..=stack.relative_degree {
                let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
                for &t in &ts {
                    let mu = arc.point_derivative(form, t, j as u32).mu[k];
                    sign = sign.min(sgn * mu);
                }
            }
        }
    }

    let mut continuity: f64 = 0.0;
    let mut costate: f64 = 0.0;
    let mut tangency: f64 = 0.0;
    let mut h_jump: f64 = 0.0;
    for (j, jn) in traj.junctions.iter().enumerate() {
        let left = traj.arcs[j].point(form, jn.time);
        let right = traj.arcs[j + 1].point(form, jn.time);
        continuity = continuity.max((&left.s - &right.s).amax());
        let mut jump = &left.lambda - &right.lambda;
        let mut p = 0;
        for st in &jn.spec.stacks {
            for (row, off) in st.rows.iter().zip(&st.offsets) {
                jump -= row * jn.pi[p];
                tangency = tangency.max((row.dot(&left.s) - off).abs());
                p += 1;
            }
        }
        costate = costate.max(jump.amax());
        let hl = traj.arcs[j].hamiltonian(form, jn.time);
        let hr = traj.arcs[j + 1].hamiltonian(form, jn.time);
        h_jump = h_jump.max((hl - hr).abs());
    }

    let first = traj.arcs.first().expect("a trajectory has arcs");
    let last = traj.arcs.last().expect("a trajectory has arcs");
    let boundary =
        (first.point(form, 0.0).s - &form.s0).amax().max((last.point(form, form.horizon).s - &form.st).amax());

    Diagnostics {
        energy: traj.energy(),
        euler_lagrange: el,
        hamiltonian_spread: spread,
        hamiltonian_jump: h_jump,
        state_continuity: continuity,
        costate_jump: costate,
        tangency,
        boundary,
        max_violation: traj.max_violation(samples * traj.arcs.len()),
        multiplier_sign: sign,
    }
}

fn active_label(traj: &Trajectory, rows: &[usize]) -> String {
    if rows.is_empty() {
        return "none".into();
    }
    let names = &traj.form.problem.constraint_names;
    rows.iter().map(|&r| names[r].as_str()).collect::<Vec<_>>().join("+")
}

/// Write `samples` uniformly spaced points (plus the junction times) in original coordinates.
///
/// Columns: `t`, the state names, the control names, `arc_index`, `active_set`.
pub fn write_csv<W: Write>(traj: &Trajectory, samples: usize, out: W) -> Result<(), JunctionError> {
    let p = &traj.form.problem;
    let io = |e: csv::Error| JunctionError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(p.state_names.iter().cloned());
    header.extend(p.control_names.iter().cloned());
    header.push("arc_index".into());
    header.push("active_set".into());
    w.write_record(&header).map_err(io)?;
    for t in traj.sample_times(samples) {
        let pt = traj.evaluate(t)?;
        let mut rec = vec![fmt17(t)];
        rec.extend(pt.x.iter().map(|&v| fmt17(v)));
        rec.extend(pt.u.iter().map(|&v| fmt17(v)));
        rec.push(pt.arc_index.to_string());
        rec.push(active_label(traj, traj.arcs[pt.arc_index].active_set()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| JunctionError::Io(e.to_string()))?;
    Ok(())
}

/// Seventeen significant digits, enough to round-trip any `f64`.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
