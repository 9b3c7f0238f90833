//! Choosing which constraints activate, and in what order.
//!
//! The heuristic solves, looks for the worst violated row, imposes it as an
//! instantaneous touch and repeats; a row that stays violated after a touch
//! is escalated to an interval activation. The exhaustive mode solves every
//! short sequence and ranks them.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::junctions::{
    assemble, solve_junctions_with, solve_unconstrained, JunctionError, JunctionKind, JunctionSpec, SolveOptions,
    Trajectory,
};
use crate::model::BrunovskyForm;
use crate::primitives::PrimitiveLibrary;

/// Constraint values above this count as violations.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Default number of points of the feasibility grid.
/// Relative cost difference below which two sequences count as tied.
pub const TIE_TOL: f64 = 1e-9;

pub const CHECK_POINTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequencingError {
    #[error("no feasible sequence after {iterations} iterations (last: {last})")]
    HeuristicExhausted { iterations: usize, last: String },
    #[error("cannot parse sequence `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error(transparent)]
    Junction(#[from] JunctionError),
}

/// One violated constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub row: usize,
    /// Time of the largest violation.
    pub time: f64,
    /// Largest value of `Lz − e` for the row.
    pub magnitude: f64,
    /// Grid interval around `time` on which the row is violated.
    pub start: f64,
    pub end: f64,
}

fn row_value(traj: &Trajectory, row: usize, t: f64) -> f64 {
    let arc = &traj.arcs[traj.arc_index(t)];
    let z = arc.z(&traj.form, t);
    traj.form.lmat.row(row).dot(&z.transpose()) - traj.form.evec[row]
}

/// Golden-section maximization of a row on `[a, b]`.
fn refine_max(traj: &Trajectory, row: usize, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (row_value(traj, row, c), row_value(traj, row, d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = row_value(traj, row, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = row_value(traj, row, d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Violated rows of a trajectory, worst first (ties broken by earliest time).
///
/// Every row is evaluated on `points` uniform samples plus the junction times;
/// each grid-local maximum that comes close to the bound is refined by a
/// golden-section search. An empty result certifies feasibility to
/// [`FEASIBILITY_TOL`].
pub fn check_feasibility(traj: &Trajectory, points: usize) -> Vec<Violation> {
    let form = &*traj.form;
    let ts = traj.sample_times(points);
    let zs: Vec<_> = ts.iter().map(|&t| traj.arcs[traj.arc_index(t)].z(form, t)).collect();
    let mut out = Vec::new();
    for row in 0..form.constraint_count() {
        let vals: Vec<f64> = zs.iter().map(|z| form.lmat.row(row).dot(&z.transpose()) - form.evec[row]).collect();
        let scale = form.evec[row].abs().max(1.0);
        let mut best: Option<(f64, f64, usize)> = None;
        for i in 0..vals.len() {
            let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
            let right = vals.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
            if vals[i] < left || vals[i] < right || vals[i] < -1e-3 * scale {
                continue;
            }
            let (t, v) = if i > 0 && i + 1 < vals.len() {
                let r = refine_max(traj, row, ts[i - 1], ts[i + 1]);
                if r.1 > vals[i] {
                    r
                } else {
                    (ts[i], vals[i])
                }
            } else {
                (ts[i], vals[i])
            };
            if best.map_or(true, |(_, bv, _)| v > bv) {
                best = Some((t, v, i));
            }
        }
        if let Some((t, v, i)) = best {
            if v > FEASIBILITY_TOL {
                let mut lo = i;
                while lo > 0 && vals[lo - 1] > 0.0 {
                    lo -= 1;
                }
                let mut hi = i;
                while hi + 1 < vals.len() && vals[hi + 1] > 0.0 {
                    hi += 1;
                }
                out.push(Violation { row, time: t, magnitude: v, start: ts[lo], end: ts[hi] });
            }
        }
    }
    out.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.time.total_cmp(&b.time)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CandidateStatus {
    Unsolved,
    Solved { cost: f64 },
    Infeasible { reason: String },
}

/// A junction sequence with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SequenceCandidate {
    pub specs: Vec<JunctionSpec>,
    pub status: CandidateStatus,
    /// Largest constraint violation on the check grid, once solved.
    pub max_violation: Option<f64>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl SequenceCandidate {
    pub fn unsolved(specs: Vec<JunctionSpec>) -> Self {
        Self { specs, status: CandidateStatus::Unsolved, max_violation: None, trajectory: None }
    }

    pub fn cost(&self) -> Option<f64> {
        match self.status {
            CandidateStatus::Solved { cost } => Some(cost),
            _ => None,
        }
    }

    /// Human-readable sequence such as `touch:floor` or `entry:ceiling,exit:ceiling`.
    pub fn label(&self, form: &BrunovskyForm) -> String {
        sequence_label(&self.specs, form)
    }
}

pub fn sequence_label(specs: &[JunctionSpec], form: &BrunovskyForm) -> String {
    if specs.is_empty() {
        return "unconstrained".into();
    }
    let names = &form.problem.constraint_names;
    specs
        .iter()
        .map(|s| {
            let rows: Vec<&str> = s.rows.iter().map(|&r| names[r].as_str()).collect();
            format!("{}:{}", s.kind, rows.join("+"))
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Parse `kind:row[+row],…` where rows are constraint names or indices.
pub fn parse_sequence(form: &BrunovskyForm, text: &str) -> Result<Vec<JunctionSpec>, SequencingError> {
    let err = |reason: String| SequencingError::Parse { text: text.to_string(), reason };
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "unconstrained" {
        return Ok(Vec::new());
    }
    let names = &form.problem.constraint_names;
    let mut specs = Vec::new();
    for item in trimmed.split(',') {
        let item = item.trim();
        // `kind:rows`, or the suffix form `rows-kind` where `rows-interval` expands to an entry/exit pair
        let (kind, rows) = match item.split_once(':') {
            Some(pair) => pair,
            None => match item.rsplit_once('-') {
                Some((rows, kind)) => (kind, rows),
                None => return Err(err(format!("`{item}` is neither kind:rows nor rows-kind"))),
            },
        };
        let kinds: &[JunctionKind] = match kind.trim() {
            "interval" => &[JunctionKind::Entry, JunctionKind::Exit],
            k => &[k.parse().map_err(err)?],
        };
        let rows = rows
            .split('+')
            .map(|r| {
                let r = r.trim();
                names
                    .iter()
                    .position(|n| n == r)
                    .or_else(|| r.parse::<usize>().ok().filter(|&i| i < names.len()))
                    .ok_or_else(|| err(format!("unknown constraint `{r}`")))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        for &kind in kinds {
            specs.push(JunctionSpec::new(form, kind, &rows).map_err(|e| err(e.to_string()))?);
        }
    }
    Ok(specs)
}

/// Knobs of the sequence search.
#[derive(Debug, Clone)]
pub struct SequencingOptions {
    pub max_iterations: usize,
    pub check_points: usize,
    pub solve: SolveOptions,
}

impl Default for SequencingOptions {
    fn default() -> Self {
        Self { max_iterations: 8, check_points: CHECK_POINTS, solve: SolveOptions::default() }
    }
}

/// Solve one sequence and certify it on the check grid.
pub fn solve_candidate(
    library: &PrimitiveLibrary,
    specs: Vec<JunctionSpec>,
    guess: Option<&[f64]>,
    opts: &SequencingOptions,
) -> SequenceCandidate {
    let mut cand = SequenceCandidate::unsolved(specs);
    let solved = assemble(&cand.specs, library).and_then(|sys| solve_junctions_with(&sys, guess, &opts.solve));
    match solved {
        Ok(traj) => {
            let violations = check_feasibility(&traj, opts.check_points);
            cand.max_violation = Some(violations.first().map_or(0.0, |v| v.magnitude));
            cand.status = match violations.first() {
                None => CandidateStatus::Solved { cost: traj.energy() },
                Some(v) => CandidateStatus::Infeasible {
                    reason: format!(
                        "{} violated by {:.3e} at t = {:.4}",
                        library.form().problem.constraint_names[v.row],
                        v.magnitude,
                        v.time
                    ),
                },
            };
            for (spec, t) in cand.specs.iter_mut().zip(traj.junction_times()) {
                spec.time = Some(t);
            }
            cand.trajectory = Some(traj);
        }
        Err(e) => cand.status = CandidateStatus::Infeasible { reason: e.to_string() },
    }
    cand
}

fn insert_by_time(specs: &mut Vec<JunctionSpec>, times: &mut Vec<f64>, spec: JunctionSpec, t: f64) {
    let pos = times.iter().position(|&x| x > t).unwrap_or(times.len());
    specs.insert(pos, spec);
    times.insert(pos, t);
}

/// Violation-driven sequence selection, starting from `seed` (or no junctions).
pub fn violation_heuristic(
    library: &PrimitiveLibrary,
    seed: Option<Vec<JunctionSpec>>,
    opts: &SequencingOptions,
) -> Result<SequenceCandidate, SequencingError> {
    let form = library.form();
    let mut specs = seed.unwrap_or_default();
    let mut guess: Option<Vec<f64>> = None;
    let mut last = String::from("none");
    for _ in 0..opts.max_iterations {
        let cand = solve_candidate(library, specs.clone(), guess.as_deref(), opts);
        let Some(traj) = &cand.trajectory else {
            // the touch has no consistent junction time: escalate it
            match escalate_last_touch(form, &specs, guess.as_deref())? {
                Some((s, g)) => {
                    specs = s;
                    guess = Some(g);
                    last = sequence_label(&specs, form);
                    continue;
                }
                None => return Err(SequencingError::HeuristicExhausted { iterations: opts.max_iterations, last }),
            }
        };
        let violations = check_feasibility(traj, opts.check_points);
        let Some(v) = violations.first().copied() else {
            return Ok(cand);
        };
        last = format!("{} ({})", sequence_label(&specs, form), form.problem.constraint_names[v.row]);
        let mut times = traj.junction_times();
        let touched = specs.iter().position(|s| s.kind == JunctionKind::Touch && s.rows == [v.row]);
        match touched {
            None => {
                let spec = JunctionSpec::touch(form, &[v.row]).or_else(|_| JunctionSpec::entry(form, &[v.row]))?;
                if spec.kind == JunctionKind::Entry {
                    let (a, b) = interval_guess(v, form.horizon);
                    insert_by_time(&mut specs, &mut times, spec, a);
                    insert_by_time(&mut specs, &mut times, JunctionSpec::exit(form, &[v.row])?, b);
                } else {
                    insert_by_time(&mut specs, &mut times, spec, v.time);
                }
                guess = Some(times);
            }
            Some(k) => {
                let t = times[k];
                specs.remove(k);
                times.remove(k);
                let (a, b) = interval_guess(Violation { time: t, ..v }, form.horizon);
                insert_by_time(&mut specs, &mut times, JunctionSpec::entry(form, &[v.row])?, a);
                insert_by_time(&mut specs, &mut times, JunctionSpec::exit(form, &[v.row])?, b);
                guess = Some(times);
            }
        }
    }
    Err(SequencingError::HeuristicExhausted { iterations: opts.max_iterations, last })
}

fn interval_guess(v: Violation, horizon: f64) -> (f64, f64) {
    let half = (0.5 * (v.end - v.start)).max(0.02 * horizon);
    ((v.time - half).max(1e-3 * horizon), (v.time + half).min(horizon * (1.0 - 1e-3)))
}

type Escalation = Option<(Vec<JunctionSpec>, Vec<f64>)>;

fn escalate_last_touch(
    form: &BrunovskyForm,
    specs: &[JunctionSpec],
    guess: Option<&[f64]>,
) -> Result<Escalation, SequencingError> {
    let Some(k) = specs.iter().rposition(|s| s.kind == JunctionKind::Touch) else { return Ok(None) };
    let row = specs[k].rows[0];
    let horizon = form.horizon;
    let mut times: Vec<f64> = match guess {
        Some(g) if g.len() == specs.len() => g.to_vec(),
        _ => (0..specs.len()).map(|i| horizon * (i as f64 + 1.0) / (specs.len() as f64 + 1.0)).collect(),
    };
    let mut out = specs.to_vec();
    let t = times[k];
    out.remove(k);
    times.remove(k);
    let (a, b) = interval_guess(Violation { row, time: t, magnitude: 0.0, start: t, end: t }, horizon);
    insert_by_time(&mut out, &mut times, JunctionSpec::entry(form, &[row])?, a);
    insert_by_time(&mut out, &mut times, JunctionSpec::exit(form, &[row])?, b);
    Ok(Some((out, times)))
}

/// All valid single-row sequences with at most `max_junctions` junctions.
pub fn enumerate_sequences(form: &BrunovskyForm, max_junctions: usize) -> Vec<Vec<JunctionSpec>> {
    let mut alphabet = Vec::new();
    for r in 0..form.constraint_count() {
        for kind in [JunctionKind::Touch, JunctionKind::Entry, JunctionKind::Exit] {
            if let Ok(s) = JunctionSpec::new(form, kind, &[r]) {
                alphabet.push(s);
            }
        }
    }
    let mut out: Vec<Vec<JunctionSpec>> = vec![Vec::new()];
    let mut frontier: Vec<(Vec<JunctionSpec>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
    for _ in 0..max_junctions {
        let mut next = Vec::new();
        for (seq, active) in &frontier {
            for s in &alphabet {
                let row = s.rows[0];
                let ok = match s.kind {
                    JunctionKind::Entry | JunctionKind::Touch => !active.contains(&row),
                    JunctionKind::Exit => active.contains(&row),
                };
                if !ok {
                    continue;
                }
                let mut a = active.clone();
                match s.kind {
                    JunctionKind::Entry => a.push(row),
                    JunctionKind::Exit => a.retain(|&x| x != row),
                    JunctionKind::Touch => {}
                }
                let mut q = seq.clone();
                q.push(s.clone());
                if a.is_empty() {
                    out.push(q.clone());
                }
                next.push((q, a));
            }
        }
        frontier = next;
    }
    out
}

/// Outcome of [`exhaustive_compare`].
#[derive(Debug, Clone, Serialize)]
pub struct Ranking {
    /// Cheapest feasible candidate.
    pub best: SequenceCandidate,
    /// Every candidate: solved ones by cost, then the rest.
    pub candidates: Vec<SequenceCandidate>,
    /// Cost of the unconstrained solution, a lower bound for every candidate.
    pub lower_bound: f64,
}

/// Solve every sequence of up to `max_junctions` junctions and rank them.
///
/// Candidates are solved in parallel. The unconstrained cost bounds every
/// candidate from below, so once a feasible candidate attains it the rest are
/// left unsolved.
pub fn exhaustive_compare(
    library: &PrimitiveLibrary,
    max_junctions: usize,
    opts: &SequencingOptions,
) -> Result<Ranking, SequencingError> {
    let form = library.form();
    let lower_bound = solve_unconstrained(library)?.energy();
    let sequences = enumerate_sequences(form, max_junctions);
    let incumbent = AtomicU64::new(f64::INFINITY.to_bits());
    let improve = |cost: f64| {
        let mut cur = incumbent.load(Ordering::Acquire);
        while cost < f64::from_bits(cur) {
            match incumbent.compare_exchange(cur, cost.to_bits(), Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => break,
                Err(actual) => cur = actual,
            }
        }
    };
    let pruned = || lower_bound >= f64::from_bits(incumbent.load(Ordering::Acquire)) - 1e-9;

    let (first, rest) = sequences.split_first().expect("the empty sequence is always present");
    let head = solve_candidate(library, first.clone(), None, opts);
    if let Some(c) = head.cost() {
        improve(c);
    }
    let mut candidates: Vec<SequenceCandidate> = rest
        .par_iter()
        .map(|specs| {
            if pruned() {
                return SequenceCandidate::unsolved(specs.clone());
            }
            let c = solve_candidate(library, specs.clone(), None, opts);
            if let Some(cost) = c.cost() {
                improve(cost);
            }
            c
        })
        .collect();
    candidates.insert(0, head);
    // Costs that agree to rounding are the same optimum written two ways (two
    // touches enclosing a zero-input stretch equal one interval), so prefer the
    // sequence with fewer touches, then fewer junctions.
    let touches = |c: &SequenceCandidate| c.specs.iter().filter(|s| s.kind == JunctionKind::Touch).count();
    candidates.sort_by(|a, b| match (a.cost(), b.cost()) {
        (Some(x), Some(y)) if (x - y).abs() <= TIE_TOL * x.abs().max(y.abs()).max(1.0) => {
            touches(a).cmp(&touches(b)).then(a.specs.len().cmp(&b.specs.len())).then(x.total_cmp(&y))
        }
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let best = candidates.iter().find(|c| c.cost().is_some()).cloned().ok_or_else(|| {
        SequencingError::HeuristicExhausted { iterations: candidates.len(), last: "no feasible sequence".into() }
    })?;
    Ok(Ranking { best, candidates, lower_bound })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::bench::{build_problem, SubmersibleScenario, CEILING, FLOOR};
    use crate::model::{to_brunovsky, LqProblem};

    fn submersible(s: SubmersibleScenario) -> PrimitiveLibrary {
        PrimitiveLibrary::new(Arc::new(to_brunovsky(&build_problem(&s)).unwrap()))
    }

    fn bryson_ho() -> PrimitiveLibrary {
        let p = LqProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0 / 9.0),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::zeros(2, 1),
            DVector::from_row_slice(&[0.0, 1.0]),
            DVector::from_row_slice(&[0.0, -1.0]),
            1.0,
        )
        .unwrap();
        PrimitiveLibrary::new(Arc::new(to_brunovsky(&p).unwrap()))
    }

    #[test]
    fn nominal_is_feasible_and_perturbed_violates_floor() {
        let lib = submersible(SubmersibleScenario::nominal());
        assert!(check_feasibility(&solve_unconstrained(&lib).unwrap(), CHECK_POINTS).is_empty());
        let lib = submersible(SubmersibleScenario::perturbed());
        let v = check_feasibility(&solve_unconstrained(&lib).unwrap(), CHECK_POINTS);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, FLOOR);
        assert!(v[0].time > 5.0 && v[0].time < 40.0 && v[0].magnitude > 0.1, "{v:?}");
    }

    #[test]
    fn parse_round_trip() {
        let lib = submersible(SubmersibleScenario::perturbed());
        let form = lib.form();
        let specs = parse_sequence(form, "entry:ceiling, exit:1,touch:floor").unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(sequence_label(&specs, form), "entry:ceiling,exit:ceiling,touch:floor");
        assert!(parse_sequence(form, "touch:thrust").is_err());
        assert!(parse_sequence(form, "slide:floor").is_err());
        assert!(parse_sequence(form, "touch:roof").is_err());
        assert!(parse_sequence(form, "unconstrained").unwrap().is_empty());
        let suffix = parse_sequence(form, "ceiling-touch").unwrap();
        assert_eq!(sequence_label(&suffix, form), "touch:ceiling");
        let interval = parse_sequence(form, "floor-interval, ceiling-touch").unwrap();
        assert_eq!(sequence_label(&interval, form), "entry:floor,exit:floor,touch:ceiling");
        assert!(parse_sequence(form, "floor").is_err());
    }

    #[test]
    fn enumeration_only_yields_closed_sequences() {
        let lib = submersible(SubmersibleScenario::perturbed());
        let seqs = enumerate_sequences(lib.form(), 2);
        let labels: Vec<String> = seqs.iter().map(|s| sequence_label(s, lib.form())).collect();
        assert!(labels.contains(&"unconstrained".to_string()));
        assert!(labels.contains(&"touch:floor".to_string()));
        assert!(labels.contains(&"entry:thrust,exit:thrust".to_string()));
        assert!(!labels.iter().any(|l| l.contains("touch:thrust")));
        // 1 + 2 touches + 4 ordered touch pairs + 3 intervals
        assert_eq!(seqs.len(), 10);
    }

    #[test]
    fn heuristic_picks_floor_touch() {
        let lib = submersible(SubmersibleScenario::perturbed());
        let cand = violation_heuristic(&lib, None, &SequencingOptions::default()).unwrap();
        assert_eq!(sequence_label(&cand.specs, lib.form()), "touch:floor");
        assert!((cand.cost().unwrap() - 8539.41).abs() < 0.05);

        let seed = parse_sequence(lib.form(), &format!("touch:{CEILING}")).unwrap();
        let forced = violation_heuristic(&lib, Some(seed), &SequencingOptions::default()).unwrap();
        assert_eq!(sequence_label(&forced.specs, lib.form()), "touch:ceiling");
        assert!(forced.cost().unwrap() > cand.cost().unwrap());
    }

    #[test]
    fn heuristic_escalates_to_interval() {
        let lib = bryson_ho();
        let cand = violation_heuristic(&lib, None, &SequencingOptions::default()).unwrap();
        assert_eq!(sequence_label(&cand.specs, lib.form()), "entry:g1,exit:g1");
        assert!((cand.cost().unwrap() - 8.0).abs() < 1e-6);
    }

    #[test]
    fn exhaustive_on_bryson_ho() {
        let lib = bryson_ho();
        let ranking = exhaustive_compare(&lib, 2, &SequencingOptions::default()).unwrap();
        // two touches at 1/3 and 2/3 reproduce the boundary arc exactly (u ≡ 0 between them),
        // so both sequences tie and the interval wins the tie
        let best = &ranking.best;
        assert_eq!(best.label(lib.form()), "entry:g1,exit:g1");
        let pair = ranking.candidates.iter().find(|c| c.label(lib.form()) == "touch:g1,touch:g1").unwrap();
        assert!((pair.cost().unwrap() - 8.0).abs() < 1e-6);
        assert!((best.cost().unwrap() - 8.0).abs() < 1e-6);
        let ts: Vec<f64> = best.specs.iter().map(|s| s.time.unwrap()).collect();
        assert!((ts[0] - 1.0 / 3.0).abs() < 1e-6 && (ts[1] - 2.0 / 3.0).abs() < 1e-6, "{ts:?}");
        for c in &ranking.candidates {
            if let Some(cost) = c.cost() {
                assert!(cost >= ranking.lower_bound - 1e-9);
            }
        }
    }

    #[test]
    fn exhaustive_nominal_prunes_everything() {
        let lib = submersible(SubmersibleScenario::nominal());
        let ranking = exhaustive_compare(&lib, 1, &SequencingOptions::default()).unwrap();
        assert!(ranking.best.specs.is_empty());
        assert!(ranking.candidates.iter().skip(1).all(|c| c.status == CandidateStatus::Unsolved));
    }
}
