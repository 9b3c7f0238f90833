use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use super::{build_problem, displayed_cost_matrix, SubmersibleScenario, Variant, CEILING, FLOOR};
use crate::junctions::{write_csv, JunctionSpec, Trajectory};
use crate::lqr::{optimize_weights, trace, GaConfig, LqrWeights};
use crate::model::{chain_slices, to_brunovsky, BrunovskyForm};
use crate::primitives::PrimitiveLibrary;
use crate::sequencing::{sequence_label, violation_heuristic, SequenceCandidate, SequencingError, SequencingOptions};

/// Knobs shared by both benchmark reports.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub ga: GaConfig,
    /// Skip the LQR search (it dominates the run time).
    pub lqr: bool,
    pub sequencing: SequencingOptions,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { ga: GaConfig::default(), lqr: true, sequencing: SequencingOptions::default() }
    }
}

/// Vertical state at a floor or ceiling contact.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContactState {
    pub time: f64,
    pub py: f64,
    pub vy: f64,
    pub beta: f64,
    /// `|a_y⁻ − a_y⁺|`.
    pub ay_jump: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub sequence: String,
    /// Energy under the running-cost matrix.
    pub energy: f64,
    /// Energy under the printed cost matrix.
    pub displayed_energy: f64,
    pub junction_times: Vec<f64>,
    pub multipliers: Vec<Vec<f64>>,
    pub max_violation: f64,
    pub contact: Option<ContactState>,
    pub solve_seconds: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Serialize)]
pub struct LqrReport {
    pub energy: f64,
    pub terminal_error: f64,
    pub fitness: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub infeasible_fraction: f64,
    pub seed: u64,
    pub weights: LqrWeights,
    #[serde(skip)]
    pub trace: Vec<(f64, DVector<f64>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub variant: Variant,
    pub proposed: CandidateReport,
    pub lqr: Option<LqrReport>,
    /// LQR energy over proposed energy.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContactReport {
    pub variant: Variant,
    /// Sequence chosen by the heuristic from scratch.
    pub floor: CandidateReport,
    /// Sequence reached from a forced ceiling touch.
    pub ceiling: CandidateReport,
    /// Floor touch imposing the whole tangency stack, for comparison.
    pub floor_full_stack: Option<CandidateReport>,
    /// `(ceiling − floor) / floor` in percent, running-cost energies.
    pub gap_percent: f64,
    /// Same gap with the printed cost matrix.
    pub displayed_gap_percent: f64,
    /// Largest difference of the x-chain between the two candidates.
    pub x_chain_deviation: f64,
    pub lqr: Option<LqrReport>,
    pub ratio: Option<f64>,
}

fn library(s: &SubmersibleScenario) -> PrimitiveLibrary {
    PrimitiveLibrary::new(Arc::new(to_brunovsky(&build_problem(s)).expect("the submersible is controllable")))
}

fn contact(traj: &Trajectory) -> Option<ContactState> {
    let jn = traj.junctions.iter().find(|j| j.spec.rows.iter().any(|&r| r == FLOOR || r == CEILING))?;
    let k = traj.junctions.iter().position(|j| std::ptr::eq(j, jn))?;
    let left = traj.arcs[k].z(&traj.form, jn.time);
    let right = traj.arcs[k + 1].z(&traj.form, jn.time);
    Some(ContactState { time: jn.time, py: left[2], vy: left[3], beta: left[4], ay_jump: (left[6] - right[6]).abs() })
}

fn report(
    s: &SubmersibleScenario,
    cand: SequenceCandidate,
    form: &BrunovskyForm,
    seconds: f64,
) -> Result<CandidateReport, SequencingError> {
    let traj = cand
        .trajectory
        .clone()
        .ok_or_else(|| SequencingError::HeuristicExhausted { iterations: 0, last: format!("{:?}", cand.status) })?;
    Ok(CandidateReport {
        sequence: sequence_label(&cand.specs, form),
        energy: traj.energy(),
        displayed_energy: traj.energy_with(&displayed_cost_matrix(&s.params)),
        junction_times: traj.junction_times(),
        multipliers: traj.junctions.iter().map(|j| j.pi.to_vec()).collect(),
        max_violation: cand.max_violation.unwrap_or(f64::NAN),
        contact: contact(&traj),
        solve_seconds: seconds,
        trajectory: traj,
    })
}

fn solve_timed(
    s: &SubmersibleScenario,
    lib: &PrimitiveLibrary,
    seed: Option<Vec<JunctionSpec>>,
    opts: &SequencingOptions,
) -> Result<CandidateReport, SequencingError> {
    let t = Instant::now();
    let cand = violation_heuristic(lib, seed, opts)?;
    report(s, cand, lib.form(), t.elapsed().as_secs_f64())
}

fn run_lqr(form: &BrunovskyForm, cfg: &GaConfig) -> LqrReport {
    let rep = optimize_weights(form, cfg);
    LqrReport {
        energy: rep.evaluation.energy,
        terminal_error: rep.evaluation.terminal_error,
        fitness: rep.evaluation.fitness,
        generations: rep.history.len(),
        evaluations: rep.evaluations,
        infeasible_fraction: rep.infeasible_fraction(),
        seed: cfg.seed,
        weights: rep.best,
        trace: trace(&rep.evaluation.gain, form, cfg.simulation.dt),
    }
}

/// Energy of the optimal trajectory and of the best LQR controller.
pub fn run_comparison(s: &SubmersibleScenario, opts: &BenchOptions) -> Result<ComparisonReport, SequencingError> {
    let lib = library(s);
    let (proposed, lqr) = rayon::join(
        || solve_timed(s, &lib, None, &opts.sequencing),
        || opts.lqr.then(|| run_lqr(lib.form(), &opts.ga)),
    );
    let proposed = proposed?;
    let ratio = lqr.as_ref().map(|l| l.energy / proposed.energy);
    Ok(ComparisonReport { variant: s.variant, proposed, lqr, ratio })
}

/// Floor-touch and ceiling-touch candidates and the LQR baseline.
pub fn run_contacts(s: &SubmersibleScenario, opts: &BenchOptions) -> Result<ContactReport, SequencingError> {
    let lib = library(s);
    let form = lib.form();
    let ceiling_seed = vec![JunctionSpec::touch(form, &[CEILING])?];
    let ((floor, ceiling), (full, lqr)) = rayon::join(
        || {
            rayon::join(
                || solve_timed(s, &lib, None, &opts.sequencing),
                || solve_timed(s, &lib, Some(ceiling_seed.clone()), &opts.sequencing),
            )
        },
        || {
            rayon::join(
                || {
                    let spec = JunctionSpec::full_touch(form, &[FLOOR]).ok()?;
                    let t = Instant::now();
                    let cand = crate::sequencing::solve_candidate(&lib, vec![spec], None, &opts.sequencing);
                    cand.cost()?;
                    report(s, cand, form, t.elapsed().as_secs_f64()).ok()
                },
                || opts.lqr.then(|| run_lqr(form, &opts.ga)),
            )
        },
    );
    let (floor, ceiling) = (floor?, ceiling?);
    let x_cols = &chain_slices(form)[0];
    let x_chain_deviation = floor
        .trajectory
        .sample_times(2000)
        .iter()
        .map(|&t| {
            let a = floor.trajectory.evaluate(t).expect("inside horizon").z;
            let b = ceiling.trajectory.evaluate(t).expect("inside horizon").z;
            x_cols.iter().map(|&c| (a[c] - b[c]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let ratio = lqr.as_ref().map(|l| l.energy / floor.energy);
    Ok(ContactReport {
        variant: s.variant,
        gap_percent: 100.0 * (ceiling.energy - floor.energy) / floor.energy,
        displayed_gap_percent: 100.0 * (ceiling.displayed_energy - floor.displayed_energy) / floor.displayed_energy,
        x_chain_deviation,
        floor,
        ceiling,
        floor_full_stack: full,
        lqr,
        ratio,
    })
}

/// Physical horizontal and vertical thrust `u_x = a_x + b_x v_x`, `u_y = a_y + b_y β`.
pub fn physical_controls(s: &SubmersibleScenario, z: &DVector<f64>) -> (f64, f64) {
    (z[5] + s.params.bx * z[1], z[6] + s.params.by * z[4])
}

/// Paths and thrust traces, one row per sample: `series,t,p_x,p_y,u_x,u_y`.
pub fn write_figure_data<W: Write>(
    s: &SubmersibleScenario,
    series: &[(&str, &Trajectory)],
    lqr: Option<&[(f64, DVector<f64>)]>,
    samples: usize,
    out: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "t", "p_x", "p_y", "u_x", "u_y"])?;
    let mut row = |name: &str, t: f64, z: &DVector<f64>| {
        let (ux, uy) = physical_controls(s, z);
        w.write_record([
            name.to_string(),
            format!("{t:.16e}"),
            format!("{:.16e}", z[0]),
            format!("{:.16e}", z[2]),
            format!("{ux:.16e}"),
            format!("{uy:.16e}"),
        ])
    };
    for (name, traj) in series {
        for t in traj.sample_times(samples) {
            let p = traj.evaluate(t).map_err(|e| std::io::Error::other(e.to_string()))?;
            row(name, t, &p.z)?;
        }
    }
    if let Some(tr) = lqr {
        for (t, z) in tr {
            row("lqr", *t, z)?;
        }
    }
    w.flush()
}

/// Write `report.json`, one trajectory CSV per candidate and `figure_data.csv` into `dir`.
pub fn write_comparison(
    s: &SubmersibleScenario,
    rep: &ComparisonReport,
    dir: &Path,
    samples: usize,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(rep)? + "\n")?;
    write_trajectory(&rep.proposed.trajectory, &dir.join("trajectory_proposed.csv"), samples)?;
    let f = std::fs::File::create(dir.join("figure_data.csv"))?;
    write_figure_data(
        s,
        &[("proposed", &rep.proposed.trajectory)],
        rep.lqr.as_ref().map(|l| l.trace.as_slice()),
        samples,
        f,
    )
}

pub fn write_contacts(s: &SubmersibleScenario, rep: &ContactReport, dir: &Path, samples: usize) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(rep)? + "\n")?;
    write_trajectory(&rep.floor.trajectory, &dir.join("trajectory_floor.csv"), samples)?;
    write_trajectory(&rep.ceiling.trajectory, &dir.join("trajectory_ceiling.csv"), samples)?;
    let f = std::fs::File::create(dir.join("figure_data.csv"))?;
    write_figure_data(
        s,
        &[("floor", &rep.floor.trajectory), ("ceiling", &rep.ceiling.trajectory)],
        rep.lqr.as_ref().map(|l| l.trace.as_slice()),
        samples,
        f,
    )
}

fn write_trajectory(traj: &Trajectory, path: &Path, samples: usize) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(traj, samples, f).map_err(|e| std::io::Error::other(e.to_string()))
}
