use super::system::JunctionSystem;
use super::{assemble, JunctionError, Trajectory};
use crate::primitives::PrimitiveLibrary;

/// Knobs of the outer junction-time search.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Candidate times of the one-junction scan.
    pub scan_points: usize,
    /// Required `|H⁻ − H⁺|`, relative to `max(1, |H|)`.
    pub tolerance: f64,
    pub max_newton: usize,
    /// Upper bound on Newton seeds for several junctions.
    pub max_seeds: usize,
    /// Samples used to rank roots by feasibility.
    pub feasibility_samples: usize,
    pub feasibility_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            scan_points: 200,
            tolerance: 1e-8,
            max_newton: 60,
            max_seeds: 300,
            feasibility_samples: 2000,
            feasibility_tol: 1e-8,
        }
    }
}

/// The single-arc solution of the boundary-value problem with no active constraints.
pub fn solve_unconstrained(library: &PrimitiveLibrary) -> Result<Trajectory, JunctionError> {
    let system = assemble(&[], library)?;
    system.solve_fixed(&[]).map_err(|e| match e {
        JunctionError::IllConditioned { condition } => JunctionError::SingularBoundarySystem { condition },
        other => other,
    })
}

struct Root {
    times: Vec<f64>,
    traj: Trajectory,
    energy: f64,
    violation: f64,
}

/// Solve for the junction times of `system`, starting from `guess` when given.
///
/// One junction is located by a scan followed by bracketed refinement; several
/// junctions by damped Newton iterations from the guess and then from a grid of
/// ordered seeds. Among all roots, feasible ones win and then the lowest energy.
pub fn solve_junctions(system: &JunctionSystem, guess: Option<&[f64]>) -> Result<Trajectory, JunctionError> {
    solve_junctions_with(system, guess, &SolveOptions::default())
}

pub fn solve_junctions_with(
    system: &JunctionSystem,
    guess: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<Trajectory, JunctionError> {
    let count = system.junction_count();
    if count == 0 {
        return system.solve_fixed(&[]);
    }
    let horizon = system.form.horizon;
    let mut roots: Vec<Root> = Vec::new();
    let mut last_error = None;

    let accept = |times: Vec<f64>, roots: &mut Vec<Root>| {
        if roots.iter().any(|r| r.times.iter().zip(&times).all(|(a, b)| (a - b).abs() <= 1e-7 * horizon)) {
            return;
        }
        if let Ok(traj) = system.solve_fixed(&times) {
            let violation = traj.max_violation(opts.feasibility_samples);
            let energy = traj.energy();
            roots.push(Root { times, traj, energy, violation });
        }
    };

    if count == 1 {
        let f = |t: f64| match system.evaluate(&[t]) {
            Ok((r, traj)) => (r[0], h_scale(system, &traj)),
            Err(_) => (f64::NAN, 1.0),
        };
        let n = opts.scan_points.max(2);
        let grid: Vec<f64> = (0..n).map(|i| horizon * (i as f64 + 0.5) / n as f64).collect();
        let vals: Vec<(f64, f64)> = grid.iter().map(|&t| f(t)).collect();
        for i in 0..n - 1 {
            let ((fa, _), (fb, _)) = (vals[i], vals[i + 1]);
            if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() && fa != 0.0 {
                continue;
            }
            match refine(&f, grid[i], grid[i + 1], fa, fb, opts.tolerance, horizon) {
                Some(t) => accept(vec![t], &mut roots),
                None => last_error = Some(format!("bracket [{}, {}] did not converge", grid[i], grid[i + 1])),
            }
        }
    } else {
        if let Some(g) = guess {
            match newton(system, g.to_vec(), opts) {
                Some(t) => accept(t, &mut roots),
                None => last_error = Some("Newton iteration from the initial guess failed".into()),
            }
            if roots.iter().any(|r| r.violation <= opts.feasibility_tol) {
                return Ok(best(roots, opts).expect("non-empty").traj);
            }
        }
        for seed in seeds(count, horizon, opts.max_seeds) {
            if let Some(t) = newton(system, seed, opts) {
                accept(t, &mut roots);
            }
        }
    }

    best(roots, opts).map(|r| r.traj).ok_or_else(|| {
        JunctionError::NoRoot(last_error.unwrap_or_else(|| "the Hamiltonian residual never changes sign".into()))
    })
}

fn best(roots: Vec<Root>, opts: &SolveOptions) -> Option<Root> {
    roots.into_iter().min_by(|a, b| {
        let fa = a.violation <= opts.feasibility_tol;
        let fb = b.violation <= opts.feasibility_tol;
        fb.cmp(&fa).then(a.energy.total_cmp(&b.energy))
    })
}

/// Size of the Hamiltonian at the junctions, used to scale the tolerance.
fn h_scale(system: &JunctionSystem, traj: &Trajectory) -> f64 {
    traj.junctions
        .iter()
        .enumerate()
        .map(|(j, jn)| traj.arcs[j].hamiltonian(&system.form, jn.time).abs())
        .fold(1.0, f64::max)
}

/// Brent's method on a sign-changing bracket; `None` if the limit is a pole
/// rather than a root.
fn refine<F: Fn(f64) -> (f64, f64)>(
    f: &F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
    horizon: f64,
) -> Option<f64> {
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    let mut scale = 1.0;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let xtol = 4.0 * f64::EPSILON * b.abs() + 1e-15 * horizon;
        let m = 0.5 * (c - b);
        // keep shrinking the bracket past the tolerance: flat roots need it
        if fb == 0.0 || m.abs() <= xtol {
            break;
        }
        if e.abs() >= xtol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (s * (2.0 * m * q0 * (q0 - r) - (b - a) * (r - 1.0)), (q0 - 1.0) * (r - 1.0) * (s - 1.0))
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (xtol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > xtol { d } else { xtol.copysign(m) };
        let (v, s) = f(b);
        if !v.is_finite() {
            return None;
        }
        fb = v;
        scale = s;
    }
    // a sign change across a pole also collapses the bracket
    (fb.abs() <= tol * scale).then_some(b)
}

fn ordered(times: &[f64], horizon: f64) -> bool {
    let mut prev = 0.0;
    times.iter().all(|&t| {
        let ok = t > prev && t < horizon;
        prev = t;
        ok
    })
}

fn newton(system: &JunctionSystem, mut x: Vec<f64>, opts: &SolveOptions) -> Option<Vec<f64>> {
    let horizon = system.form.horizon;
    let count = x.len();
    if !ordered(&x, horizon) {
        return None;
    }
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut r, traj) = system.evaluate(&x).ok()?;
    let mut scale = h_scale(system, &traj);
    // iterate until the residual stops decreasing, not just until it is
    // within tolerance, so that flat roots are still located accurately
    for _ in 0..opts.max_newton {
        let current = norm(&r);
        if current == 0.0 {
            break;
        }
        let h = 1e-6 * horizon;
        let mut jac = nalgebra::DMatrix::zeros(count, count);
        for k in 0..count {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (rp, rm) = match (system.evaluate(&xp), system.evaluate(&xm)) {
                (Ok((rp, _)), Ok((rm, _))) => (rp, rm),
                _ => break,
            };
            for i in 0..count {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_iterator(count, r.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else { break };
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha >= 1e-6 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
            if ordered(&trial, horizon) {
                if let Ok((rt, traj)) = system.evaluate(&trial) {
                    if norm(&rt) < current {
                        x = trial;
                        r = rt;
                        scale = h_scale(system, &traj);
                        improved = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !improved || alpha * step.amax() < 1e-14 * horizon {
            break;
        }
    }
    r.iter().all(|v| v.abs() <= opts.tolerance * scale).then_some(x)
}

/// Ordered seeds on a uniform grid, at most `limit` of them.
fn seeds(count: usize, horizon: f64, limit: usize) -> Vec<Vec<f64>> {
    let binom = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
    let mut g = count + 1;
    while binom(g + 1, count) <= limit {
        g += 1;
    }
    let grid: Vec<f64> = (0..g).map(|i| horizon * (i as f64 + 0.5) / g as f64).collect();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..count).collect();
    loop {
        out.push(idx.iter().map(|&i| grid[i]).collect());
        let mut k = count;
        while k > 0 && idx[k - 1] == g - count + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for i in k..count {
            idx[i] = idx[i - 1] + 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_ordered_and_bounded() {
        let s = seeds(2, 10.0, 300);
        assert!(s.len() <= 300 && s.len() > 100);
        assert!(s.iter().all(|v| ordered(v, 10.0)));
        assert_eq!(seeds(3, 1.0, 300).len(), 286);
    }

    #[test]
    fn brent_finds_cubic_root() {
        let f = |t: f64| (t * t * t - 2.0, 1.0);
        let r = refine(&f, 0.0, 2.0, -2.0, 6.0, 1e-13, 2.0).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn brent_rejects_pole() {
        let f = |t: f64| (1.0 / (t - 1.0), 1.0);
        assert!(refine(&f, 0.5, 1.7, -2.0, 1.0 / 0.7, 1e-10, 2.0).is_none());
    }
}
