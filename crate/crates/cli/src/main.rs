//! `lqmp`: solve, benchmark and cross-check constrained LQ trajectory problems.
//!
//! Exit codes: 0 feasible result, 2 infeasible, 1 input error.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqmp::bench::Variant;

use commands::{Failure, GaSettings, SequenceMode, SolveSettings};
use config::{pick, RunConfig};

#[derive(Parser)]
#[command(name = "lqmp", version, about = "Energy-optimal trajectories for linear systems with linear constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file; writes trajectory.csv, summary.json and plot.svg.
    Solve(SolveArgs),
    /// Solve a problem file and compare with trapezoidal collocation at two grid sizes.
    Oracle(OracleArgs),
    /// Tune LQR weights by genetic search; writes history.csv, controller.json and lqr_trace.csv.
    LqrBaseline(LqrArgs),
    /// Built-in benchmark scenarios.
    Bench {
        #[command(subcommand)]
        scenario: BenchScenario,
    },
}

#[derive(Subcommand)]
enum BenchScenario {
    /// Cave-crossing submersible; writes report.json, trajectory CSVs, figure_data.csv and SVG figures.
    Submersible(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// TOML file; every key it sets overrides the matching flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Uniform samples per trajectory CSV (junction times are added).
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

#[derive(Args)]
struct SolverArgs {
    /// Problem file (JSON).
    problem: Option<PathBuf>,
    /// auto | exhaustive | explicit:<spec>, where <spec> is e.g. `touch:floor` or `ceiling-touch`.
    #[arg(long, default_value = "auto")]
    sequence: String,
    /// Primitive cache file, read if present and written after solving.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Junction-time residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Grid size of the feasibility check.
    #[arg(long, default_value_t = 10_000)]
    check_points: usize,
    /// Iteration cap of the violation heuristic.
    #[arg(long, default_value_t = 8)]
    max_iterations: usize,
    /// Longest sequence tried by exhaustive mode.
    #[arg(long, default_value_t = 2)]
    max_junctions: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: SolverArgs,
    /// Collocation intervals of the fine grid; the coarse grid has half as many.
    #[arg(long, default_value_t = 1600)]
    oracle_nodes: usize,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Population size.
    #[arg(long, default_value_t = 200)]
    pop: usize,
    /// Maximum generations.
    #[arg(long, default_value_t = 2800)]
    iters: usize,
    /// Individuals copied unchanged into the next generation.
    #[arg(long, default_value_t = 10)]
    elites: usize,
    /// Stop after this many generations without improvement.
    #[arg(long, default_value_t = 50)]
    stall: usize,
    /// Closed-loop sampling step.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Weight on the squared terminal error in the fitness.
    #[arg(long, default_value_t = 1e3)]
    terminal_penalty: f64,
}

#[derive(Args)]
struct LqrArgs {
    /// Problem file (JSON).
    problem: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    ga: GaArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// nominal | perturbed
    #[arg(long)]
    variant: Variant,
    /// Skip the LQR weight search.
    #[arg(long)]
    skip_lqr: bool,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    ga: GaArgs,
}

fn config(common: &Common, subcommand: &str) -> Result<RunConfig, Failure> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Input)?,
        None => RunConfig::default(),
    };
    cfg.check_subcommand(subcommand).map_err(Failure::Input)?;
    Ok(cfg)
}

fn solve_settings(common: &Common, a: &SolverArgs, cfg: &RunConfig) -> Result<SolveSettings, Failure> {
    let problem = cfg
        .input
        .clone()
        .or_else(|| a.problem.clone())
        .ok_or_else(|| Failure::Input("no problem file given".into()))?;
    let sequence: SequenceMode = pick(&cfg.sequence, a.sequence.clone()).parse().map_err(Failure::Input)?;
    Ok(SolveSettings {
        problem,
        out: pick(&cfg.out, common.out.clone()),
        sequence,
        samples: pick(&cfg.samples, common.samples),
        cache: cfg.cache.clone().or_else(|| a.cache.clone()),
        tolerance: pick(&cfg.tolerance, a.tolerance),
        check_points: pick(&cfg.check_points, a.check_points),
        max_iterations: pick(&cfg.max_iterations, a.max_iterations),
        max_junctions: pick(&cfg.max_junctions, a.max_junctions),
    })
}

fn ga_settings(a: &GaArgs, cfg: &RunConfig) -> GaSettings {
    GaSettings {
        seed: pick(&cfg.seed, a.seed),
        population: pick(&cfg.population, a.pop),
        max_generations: pick(&cfg.max_generations, a.iters),
        elites: pick(&cfg.elites, a.elites),
        stall_generations: pick(&cfg.stall_generations, a.stall),
        dt: pick(&cfg.dt, a.dt),
        terminal_penalty: pick(&cfg.terminal_penalty, a.terminal_penalty),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(a) => {
            let cfg = config(&a.common, "solve")?;
            commands::solve(&solve_settings(&a.common, &a.solver, &cfg)?)
        }
        Command::Oracle(a) => {
            let cfg = config(&a.common, "oracle")?;
            let nodes = pick(&cfg.oracle_nodes, a.oracle_nodes);
            commands::oracle(&solve_settings(&a.common, &a.solver, &cfg)?, nodes)
        }
        Command::LqrBaseline(a) => {
            let cfg = config(&a.common, "lqr-baseline")?;
            let problem =
                cfg.input.clone().or(a.problem).ok_or_else(|| Failure::Input("no problem file given".into()))?;
            commands::lqr_baseline(&problem, &pick(&cfg.out, a.common.out.clone()), &ga_settings(&a.ga, &cfg))
        }
        Command::Bench { scenario: BenchScenario::Submersible(a) } => {
            let cfg = config(&a.common, "bench")?;
            let ga = (!a.skip_lqr).then(|| ga_settings(&a.ga, &cfg));
            commands::bench_submersible(
                a.variant,
                &pick(&cfg.out, a.common.out.clone()),
                pick(&cfg.samples, a.common.samples),
                ga.as_ref(),
            )
        }
    }
}

fn main() -> ExitCode {
    // clap would exit with 2 on a usage error, which is reserved for infeasible results
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
