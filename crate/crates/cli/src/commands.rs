use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

use lqmp::bench::{
    physical_controls, run_comparison, run_contacts, write_comparison, write_contacts, BenchOptions,
    SubmersibleScenario, Variant,
};
use lqmp::junctions::{diagnose, write_csv, Diagnostics, SolveOptions, Trajectory};
use lqmp::lqr::{optimize_weights, trace, GaConfig, SimulationConfig};
use lqmp::model::{to_brunovsky, BrunovskyForm, LqProblem};
use lqmp::oracle::{collocate, sequence_pattern, Collocation};
use lqmp::primitives::PrimitiveLibrary;
use lqmp::sequencing::{
    exhaustive_compare, parse_sequence, solve_candidate, violation_heuristic, CandidateStatus, SequenceCandidate,
    SequencingOptions, FEASIBILITY_TOL,
};

use crate::svg::{render, Panel, Series};

/// Why a command did not finish with a feasible result.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid input; exit code 1.
    Input(String),
    /// The problem was read but no feasible trajectory came out; exit code 2.
    Infeasible(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Infeasible(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) => write!(f, "error: {m}"),
            Self::Infeasible(m) => write!(f, "infeasible: {m}"),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceMode {
    Auto,
    Exhaustive,
    Explicit(String),
}

impl FromStr for SequenceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "exhaustive" => Ok(Self::Exhaustive),
            _ => s
                .strip_prefix("explicit:")
                .map(|spec| Self::Explicit(spec.to_string()))
                .ok_or_else(|| format!("unknown sequence mode `{s}` (expected auto, exhaustive or explicit:<spec>)")),
        }
    }
}

impl fmt::Display for SequenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Exhaustive => f.write_str("exhaustive"),
            Self::Explicit(s) => write!(f, "explicit:{s}"),
        }
    }
}

/// Resolved settings of `solve` and `oracle`.
#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub problem: PathBuf,
    pub out: PathBuf,
    pub sequence: SequenceMode,
    pub samples: usize,
    pub cache: Option<PathBuf>,
    pub tolerance: f64,
    pub check_points: usize,
    pub max_iterations: usize,
    pub max_junctions: usize,
}

impl SolveSettings {
    fn sequencing(&self) -> SequencingOptions {
        SequencingOptions {
            max_iterations: self.max_iterations,
            check_points: self.check_points,
            solve: SolveOptions { tolerance: self.tolerance, ..SolveOptions::default() },
        }
    }
}

fn load(path: &Path) -> Result<(LqProblem, Arc<BrunovskyForm>), Failure> {
    let problem = LqProblem::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let form = to_brunovsky(&problem).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok((problem, Arc::new(form)))
}

fn library(form: Arc<BrunovskyForm>, cache: Option<&Path>) -> PrimitiveLibrary {
    match cache {
        Some(path) if path.exists() => PrimitiveLibrary::load(form.clone(), path).unwrap_or_else(|e| {
            eprintln!("warning: ignoring primitive cache {}: {e}", path.display());
            PrimitiveLibrary::new(form)
        }),
        _ => PrimitiveLibrary::new(form),
    }
}

fn infeasible(reason: String) -> SequenceCandidate {
    let mut c = SequenceCandidate::unsolved(Vec::new());
    c.status = CandidateStatus::Infeasible { reason };
    c
}

fn choose(lib: &PrimitiveLibrary, s: &SolveSettings) -> Result<SequenceCandidate, Failure> {
    let opts = s.sequencing();
    Ok(match &s.sequence {
        SequenceMode::Auto => violation_heuristic(lib, None, &opts).unwrap_or_else(|e| infeasible(e.to_string())),
        SequenceMode::Exhaustive => exhaustive_compare(lib, s.max_junctions, &opts)
            .map(|r| r.best)
            .unwrap_or_else(|e| infeasible(e.to_string())),
        SequenceMode::Explicit(text) => {
            let specs = parse_sequence(lib.form(), text).map_err(|e| Failure::Input(e.to_string()))?;
            solve_candidate(lib, specs, None, &opts)
        }
    })
}

/// Round every float to ten significant digits so reruns print identical text.
fn fixed(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            format!("{x:.9e}")
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(fixed).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, fixed(v))).collect()),
        other => other,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let v = serde_json::to_value(value).map_err(|e| Failure::Input(e.to_string()))?;
    let text = serde_json::to_string_pretty(&fixed(v)).map_err(|e| Failure::Input(e.to_string()))? + "\n";
    fs::write(path, text).map_err(io_err(path))
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct JunctionSummary {
    time: f64,
    kind: String,
    rows: Vec<String>,
    pi: Vec<f64>,
}

#[derive(Serialize)]
struct ArcSummary {
    start: f64,
    end: f64,
    active: Vec<String>,
}

#[derive(Serialize)]
struct Summary {
    problem: String,
    sequence_mode: String,
    sequence: String,
    feasible: bool,
    reason: Option<String>,
    cost: Option<f64>,
    max_violation: Option<f64>,
    junctions: Vec<JunctionSummary>,
    arcs: Vec<ArcSummary>,
    residuals: Option<Diagnostics>,
    samples: usize,
    /// Whether re-reading the CSV gives the same feasibility verdict.
    revalidated: Option<bool>,
}

fn names(problem: &LqProblem, rows: &[usize]) -> Vec<String> {
    rows.iter().map(|&r| problem.constraint_names[r].clone()).collect()
}

/// Largest `Cx + Du − e` over the rows of a trajectory CSV.
pub fn csv_max_violation(problem: &LqProblem, path: &Path) -> Result<f64, String> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let (n, m) = (problem.state_dim(), problem.input_dim());
    let mut worst = f64::NEG_INFINITY;
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let vals: Vec<f64> = (1..1 + n + m)
            .map(|i| {
                rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| format!("bad field {i} in {}", path.display()))
            })
            .collect::<Result<_, _>>()?;
        for r in 0..problem.constraint_count() {
            let mut v = -problem.e[r];
            for (j, x) in vals[..n].iter().enumerate() {
                v += problem.c[(r, j)] * x;
            }
            for j in 0..m {
                v += problem.d[(r, j)] * vals[n + j];
            }
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

fn trace_panels(problem: &LqProblem, traj: &Trajectory, samples: usize) -> Vec<Panel> {
    let pts: Vec<_> = traj.sample_times(samples).into_iter().filter_map(|t| traj.evaluate(t).ok()).collect();
    let panel = |name: &str, f: &dyn Fn(&lqmp::junctions::TrajectoryPoint) -> f64| Panel {
        title: name.to_string(),
        x_label: "t".into(),
        series: vec![Series { name: name.to_string(), points: pts.iter().map(|p| (p.t, f(p))).collect() }],
    };
    let mut panels: Vec<Panel> = problem.state_names.iter().enumerate().map(|(i, n)| panel(n, &|p| p.x[i])).collect();
    panels.extend(problem.control_names.iter().enumerate().map(|(i, n)| panel(n, &|p| p.u[i])));
    panels
}

fn write_trajectory(traj: &Trajectory, path: &Path, samples: usize) -> Result<(), Failure> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_csv(traj, samples, f).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Solve, write `trajectory.csv`, `summary.json` and `plot.svg`, and return the candidate.
fn solve_and_write(
    s: &SolveSettings,
    problem: &LqProblem,
    lib: &PrimitiveLibrary,
) -> Result<SequenceCandidate, Failure> {
    fs::create_dir_all(&s.out).map_err(io_err(&s.out))?;
    let cand = choose(lib, s)?;
    let feasible = cand.cost().is_some();
    let mut summary = Summary {
        problem: s.problem.display().to_string(),
        sequence_mode: s.sequence.to_string(),
        sequence: cand.label(lib.form()),
        feasible,
        reason: match &cand.status {
            CandidateStatus::Infeasible { reason } => Some(reason.clone()),
            _ => None,
        },
        cost: cand.trajectory.as_ref().map(|t| t.energy()),
        max_violation: cand.max_violation,
        junctions: Vec::new(),
        arcs: Vec::new(),
        residuals: None,
        samples: s.samples,
        revalidated: None,
    };
    if let Some(traj) = &cand.trajectory {
        summary.junctions = traj
            .junctions
            .iter()
            .map(|j| JunctionSummary {
                time: j.time,
                kind: j.spec.kind.to_string(),
                rows: names(problem, &j.spec.rows),
                pi: j.pi.clone(),
            })
            .collect();
        summary.arcs = traj
            .arcs
            .iter()
            .map(|a| ArcSummary { start: a.t_start, end: a.t_end, active: names(problem, a.active_set()) })
            .collect();
        summary.residuals = Some(diagnose(traj, 200));
        let csv_path = s.out.join("trajectory.csv");
        write_trajectory(traj, &csv_path, s.samples)?;
        let reread = csv_max_violation(problem, &csv_path).map_err(Failure::Input)?;
        let agrees = (reread <= FEASIBILITY_TOL) == feasible;
        if !agrees {
            eprintln!(
                "warning: re-reading {} gives max violation {reread:.3e}, which disagrees with the solver",
                csv_path.display()
            );
        }
        summary.revalidated = Some(agrees);
        let svg = render(&trace_panels(problem, traj, s.samples.min(1000)));
        let svg_path = s.out.join("plot.svg");
        fs::write(&svg_path, svg).map_err(io_err(&svg_path))?;
    }
    write_json(&s.out.join("summary.json"), &summary)?;
    if let Some(path) = &s.cache {
        if let Err(e) = lib.save(path) {
            eprintln!("warning: could not write primitive cache {}: {e}", path.display());
        }
    }
    Ok(cand)
}

fn verdict(cand: &SequenceCandidate) -> Result<(), Failure> {
    match &cand.status {
        CandidateStatus::Solved { .. } => Ok(()),
        CandidateStatus::Infeasible { reason } => Err(Failure::Infeasible(reason.clone())),
        CandidateStatus::Unsolved => Err(Failure::Infeasible("no sequence was solved".into())),
    }
}

pub fn solve(s: &SolveSettings) -> Result<(), Failure> {
    let (problem, form) = load(&s.problem)?;
    let lib = library(form, s.cache.as_deref());
    let cand = solve_and_write(s, &problem, &lib)?;
    if let Some(cost) = cand.cost() {
        println!("{}: cost {cost:.6} with sequence {}", s.problem.display(), cand.label(lib.form()));
    }
    verdict(&cand)
}

#[derive(Serialize)]
struct RunSummary {
    row: String,
    kind: String,
    start: f64,
    end: f64,
}

#[derive(Serialize)]
struct OracleReport {
    problem: String,
    analytic_sequence: String,
    analytic_cost: Option<f64>,
    nodes: usize,
    oracle_cost: f64,
    /// `|oracle − analytic| / analytic`.
    relative_gap: Option<f64>,
    coarse_nodes: usize,
    coarse_cost: f64,
    coarse_gap: Option<f64>,
    gap_shrinks: Option<bool>,
    oracle_active: Vec<RunSummary>,
    /// Whether the collocation contacts match the analytic junction sequence.
    pattern_match: Option<bool>,
}

fn write_collocation(problem: &LqProblem, col: &Collocation, path: &Path) -> Result<(), Failure> {
    let err = |e: csv::Error| Failure::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["t".to_string()];
    header.extend(problem.state_names.iter().cloned());
    header.extend(problem.control_names.iter().cloned());
    header.extend(problem.constraint_names.iter().map(|n| format!("mu_{n}")));
    w.write_record(&header).map_err(err)?;
    for (i, t) in col.times.iter().enumerate() {
        let mut rec = vec![fmt17(*t)];
        rec.extend(col.states[i].iter().map(|&v| fmt17(v)));
        rec.extend(col.controls[i].iter().map(|&v| fmt17(v)));
        rec.extend(col.multipliers.row(i).iter().map(|&v| fmt17(v)));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn oracle(s: &SolveSettings, nodes: usize) -> Result<(), Failure> {
    let (problem, form) = load(&s.problem)?;
    let lib = library(form, s.cache.as_deref());
    let coarse_nodes = nodes / 2;
    let (cand, fine, coarse) = std::thread::scope(|scope| {
        let fine = scope.spawn(|| collocate(&problem, nodes));
        let coarse = scope.spawn(|| collocate(&problem, coarse_nodes));
        let cand = solve_and_write(s, &problem, &lib);
        (cand, fine.join().expect("collocation thread"), coarse.join().expect("collocation thread"))
    });
    let cand = cand?;
    let fine = fine.map_err(|e| Failure::Infeasible(format!("collocation with {nodes} nodes: {e}")))?;
    let coarse = coarse.map_err(|e| Failure::Infeasible(format!("collocation with {coarse_nodes} nodes: {e}")))?;
    let analytic = cand.cost();
    let gap = |c: f64| analytic.map(|a| (c - a).abs() / a.abs().max(f64::MIN_POSITIVE));
    let report = OracleReport {
        problem: s.problem.display().to_string(),
        analytic_sequence: cand.label(lib.form()),
        analytic_cost: analytic,
        nodes,
        oracle_cost: fine.cost,
        relative_gap: gap(fine.cost),
        coarse_nodes,
        coarse_cost: coarse.cost,
        coarse_gap: gap(coarse.cost),
        gap_shrinks: gap(fine.cost).zip(gap(coarse.cost)).map(|(f, c)| f < c),
        oracle_active: fine
            .active
            .iter()
            .map(|r| RunSummary {
                row: problem.constraint_names[r.row].clone(),
                kind: r.kind.to_string(),
                start: r.start,
                end: r.end,
            })
            .collect(),
        pattern_match: analytic.map(|_| sequence_pattern(&cand.specs) == fine.active_pattern()),
    };
    write_json(&s.out.join("oracle.json"), &report)?;
    write_collocation(&problem, &fine, &s.out.join("oracle_trajectory.csv"))?;
    match (analytic, report.relative_gap) {
        (Some(a), Some(g)) => {
            println!("analytic {a:.6}, collocation ({nodes} nodes) {:.6}, relative gap {:.3e}", fine.cost, g)
        }
        _ => println!("collocation ({nodes} nodes) {:.6}", fine.cost),
    }
    verdict(&cand)
}

/// Resolved settings of the weight search.
#[derive(Debug, Clone)]
pub struct GaSettings {
    pub seed: u64,
    pub population: usize,
    pub max_generations: usize,
    pub elites: usize,
    pub stall_generations: usize,
    pub dt: f64,
    pub terminal_penalty: f64,
}

impl GaSettings {
    pub fn config(&self) -> Result<GaConfig, Failure> {
        if self.population == 0 || self.elites >= self.population {
            return Err(Failure::Input(format!(
                "need 0 ≤ elites < population, got {} and {}",
                self.elites, self.population
            )));
        }
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(Failure::Input(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(GaConfig {
            population: self.population,
            elites: self.elites,
            max_generations: self.max_generations,
            stall_generations: self.stall_generations,
            seed: self.seed,
            simulation: SimulationConfig {
                dt: self.dt,
                terminal_penalty: self.terminal_penalty,
                ..SimulationConfig::default()
            },
            ..GaConfig::default()
        })
    }
}

#[derive(Serialize)]
struct ControllerReport {
    problem: String,
    feasible: bool,
    energy: f64,
    terminal_error: f64,
    fitness: f64,
    generations: usize,
    evaluations: usize,
    infeasible_fraction: f64,
    weights: lqmp::lqr::LqrWeights,
    /// Feedback gain in chain coordinates, one row per input.
    gain: Vec<Vec<f64>>,
    config: GaConfig,
}

pub fn lqr_baseline(problem_path: &Path, out: &Path, ga: &GaSettings) -> Result<(), Failure> {
    let cfg = ga.config()?;
    let (problem, form) = load(problem_path)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let rep = optimize_weights(&form, &cfg);
    let ev = &rep.evaluation;

    let hist = out.join("history.csv");
    let err = |e: csv::Error| Failure::Input(format!("{}: {e}", hist.display()));
    let mut w = csv::Writer::from_path(&hist).map_err(err)?;
    w.write_record(["generation", "best_fitness", "mean_fitness", "infeasible_fraction"]).map_err(err)?;
    for g in &rep.history {
        w.write_record([
            g.generation.to_string(),
            fmt17(g.best_fitness),
            fmt17(g.mean_fitness),
            fmt17(g.infeasible_fraction),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(io_err(&hist))?;

    let path = out.join("lqr_trace.csv");
    let err = |e: csv::Error| Failure::Input(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    let mut header = vec!["t".to_string()];
    header.extend(problem.state_names.iter().cloned());
    header.extend(problem.control_names.iter().cloned());
    w.write_record(&header).map_err(err)?;
    let (n, m) = (form.states(), form.inputs());
    for (t, z) in trace(&ev.gain, &form, cfg.simulation.dt) {
        let (x, u) = form.to_original(&z.rows(0, n).into_owned(), &z.rows(n, m).into_owned());
        let mut rec = vec![fmt17(t)];
        rec.extend(x.iter().chain(u.iter()).map(|&v| fmt17(v)));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(io_err(&path))?;

    let report = ControllerReport {
        problem: problem_path.display().to_string(),
        feasible: ev.feasible,
        energy: ev.energy,
        terminal_error: ev.terminal_error,
        fitness: ev.fitness,
        generations: rep.history.len(),
        evaluations: rep.evaluations,
        infeasible_fraction: rep.infeasible_fraction(),
        weights: rep.best.clone(),
        gain: (0..ev.gain.nrows()).map(|i| ev.gain.row(i).iter().copied().collect()).collect(),
        config: cfg,
    };
    write_json(&out.join("controller.json"), &report)?;
    println!(
        "best controller: energy {:.3}, terminal error {:.4}, {} generations, {:.1}% infeasible evaluations",
        ev.energy,
        ev.terminal_error,
        rep.history.len(),
        100.0 * rep.infeasible_fraction()
    );
    if ev.feasible {
        Ok(())
    } else {
        Err(Failure::Infeasible("no feasible controller found".into()))
    }
}

fn figure_panels(
    s: &SubmersibleScenario,
    series: &[(&str, &Trajectory)],
    lqr: Option<&[(f64, DVector<f64>)]>,
    samples: usize,
) -> (Vec<Panel>, Vec<Panel>) {
    let mut path = Vec::new();
    let mut ux = Vec::new();
    let mut uy = Vec::new();
    let mut push = |name: &str, pts: Vec<(f64, DVector<f64>)>| {
        path.push(Series { name: name.into(), points: pts.iter().map(|(_, z)| (z[0], z[2])).collect() });
        ux.push(Series {
            name: name.into(),
            points: pts.iter().map(|(t, z)| (*t, physical_controls(s, z).0)).collect(),
        });
        uy.push(Series {
            name: name.into(),
            points: pts.iter().map(|(t, z)| (*t, physical_controls(s, z).1)).collect(),
        });
    };
    for (name, traj) in series {
        let pts =
            traj.sample_times(samples).into_iter().filter_map(|t| traj.evaluate(t).ok().map(|p| (t, p.z))).collect();
        push(name, pts);
    }
    if let Some(tr) = lqr {
        push("lqr", tr.to_vec());
    }
    (
        vec![Panel { title: "path (p_y against p_x)".into(), x_label: "p_x".into(), series: path }],
        vec![
            Panel { title: "horizontal thrust u_x".into(), x_label: "t".into(), series: ux },
            Panel { title: "vertical thrust u_y".into(), x_label: "t".into(), series: uy },
        ],
    )
}

fn write_figures(out: &Path, panels: (Vec<Panel>, Vec<Panel>)) -> Result<(), Failure> {
    for (name, p) in [("paths.svg", panels.0), ("controls.svg", panels.1)] {
        let path = out.join(name);
        fs::write(&path, render(&p)).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn bench_submersible(variant: Variant, out: &Path, samples: usize, ga: Option<&GaSettings>) -> Result<(), Failure> {
    let s = SubmersibleScenario::of(variant);
    let opts = BenchOptions {
        lqr: ga.is_some(),
        ga: ga.map(GaSettings::config).transpose()?.unwrap_or_default(),
        ..BenchOptions::default()
    };
    let fail = |e: lqmp::sequencing::SequencingError| Failure::Infeasible(e.to_string());
    match variant {
        Variant::Nominal => {
            let rep = run_comparison(&s, &opts).map_err(fail)?;
            write_comparison(&s, &rep, out, samples).map_err(io_err(out))?;
            let lqr = rep.lqr.as_ref().map(|l| l.trace.as_slice());
            write_figures(out, figure_panels(&s, &[("proposed", &rep.proposed.trajectory)], lqr, samples))?;
            println!(
                "nominal: energy {:.3} (printed cost matrix {:.3}), sequence {}, solved in {:.3} s",
                rep.proposed.energy, rep.proposed.displayed_energy, rep.proposed.sequence, rep.proposed.solve_seconds
            );
            if let (Some(l), Some(r)) = (&rep.lqr, rep.ratio) {
                println!(
                    "lqr: energy {:.3}, terminal error {:.4}, ratio {r:.3} (improvement {:.0}%)",
                    l.energy,
                    l.terminal_error,
                    100.0 * (r - 1.0)
                );
            }
        }
        Variant::Perturbed => {
            let rep = run_contacts(&s, &opts).map_err(fail)?;
            write_contacts(&s, &rep, out, samples).map_err(io_err(out))?;
            let lqr = rep.lqr.as_ref().map(|l| l.trace.as_slice());
            let series = [("floor", &rep.floor.trajectory), ("ceiling", &rep.ceiling.trajectory)];
            write_figures(out, figure_panels(&s, &series, lqr, samples))?;
            for c in [&rep.floor, &rep.ceiling] {
                println!("{}: energy {:.3} (printed cost matrix {:.3})", c.sequence, c.energy, c.displayed_energy);
            }
            println!("gap {:.3}% (printed cost matrix {:.3}%)", rep.gap_percent, rep.displayed_gap_percent);
            if let (Some(l), Some(r)) = (&rep.lqr, rep.ratio) {
                println!(
                    "lqr: energy {:.3}, terminal error {:.4}, ratio {r:.3} (improvement {:.0}%)",
                    l.energy,
                    l.terminal_error,
                    100.0 * (r - 1.0)
                );
            }
        }
    }
    Ok(())
}
