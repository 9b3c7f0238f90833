//! Steady-state LQR baseline and a genetic search over its weights.
//!
//! The regulator acts on the chain-coordinate error `s − s_T` with the law
//! `a = −K (s − s_T)`. Its energy is measured with the problem's own cost
//! matrix, not the LQR weights, so it is directly comparable with the
//! optimal trajectory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::model::BrunovskyForm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("invalid LQR weights: {0}")]
    InvalidWeights(String),
    #[error("no stabilizing Riccati solution: {0}")]
    RiccatiFailure(String),
}

/// Weights of the LQR cost `e'Qe + 2e'Na + a'Ra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

/// Number of free parameters for `n` states and `m` inputs.
pub fn parameter_count(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m * (m + 1) / 2 + n * m
}

fn unpack_sym(p: &[f64], k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            out[(i, j)] = p[idx];
            out[(j, i)] = p[idx];
            idx += 1;
        }
    }
    out
}

fn pack_sym(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

impl LqrWeights {
    pub fn identity(n: usize, m: usize) -> Self {
        Self { q: DMatrix::identity(n, n), r: DMatrix::identity(m, m), n: DMatrix::zeros(n, m) }
    }

    /// Upper triangle of `Q`, upper triangle of `R`, then `N` column by column.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(parameter_count(self.q.nrows(), self.r.nrows()));
        pack_sym(&self.q, &mut out);
        pack_sym(&self.r, &mut out);
        out.extend(self.n.iter());
        out
    }

    pub fn from_params(p: &[f64], n: usize, m: usize) -> Self {
        assert_eq!(p.len(), parameter_count(n, m), "parameter vector length");
        let nq = n * (n + 1) / 2;
        let nr = m * (m + 1) / 2;
        Self {
            q: unpack_sym(&p[..nq], n),
            r: unpack_sym(&p[nq..nq + nr], m),
            n: DMatrix::from_column_slice(n, m, &p[nq + nr..]),
        }
    }

    /// `R` positive definite and `Q − N R⁻¹ N'` positive semidefinite.
    pub fn validate(&self) -> Result<(), LqrError> {
        let rmin = linalg::min_sym_eigenvalue(&self.r);
        if rmin <= 1e-12 * self.r.amax().max(1.0) {
            return Err(LqrError::InvalidWeights(format!("R has eigenvalue {rmin:e}")));
        }
        let rinv = self.r.clone().try_inverse().ok_or_else(|| LqrError::InvalidWeights("R singular".into()))?;
        let schur = &self.q - &self.n * rinv * self.n.transpose();
        let smin = linalg::min_sym_eigenvalue(&schur);
        if smin < -1e-10 * schur.amax().max(1.0) {
            return Err(LqrError::InvalidWeights(format!("Q − N R⁻¹ N' has eigenvalue {smin:e}")));
        }
        Ok(())
    }
}

/// Stabilizing solution of the algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Gain `K` of the law `a = −K e`.
    pub gain: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual.
    pub residual: f64,
}

fn are_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &LqrWeights, rinv: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let pbn = p * b + &w.n;
    (a.transpose() * p + p * a - &pbn * rinv * pbn.transpose() + &w.q).norm()
}

/// Solve `A'P + PA − (PB + N) R⁻¹ (B'P + N') + Q = 0` for the stabilizing `P`.
///
/// The matrix sign function of the Hamiltonian gives a first solution, which
/// Newton–Kleinman steps then polish.
pub fn solve_riccati(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &LqrWeights) -> Result<RiccatiSolution, LqrError> {
    w.validate()?;
    let n = a.nrows();
    let rinv = w.r.clone().try_inverse().ok_or_else(|| LqrError::InvalidWeights("R singular".into()))?;
    let abar = a - b * &rinv * w.n.transpose();
    let qbar = linalg::sym(&(&w.q - &w.n * &rinv * w.n.transpose()));
    let g = b * &rinv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&abar);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&qbar));
    h.view_mut((n, n), (n, n)).copy_from(&(-abar.transpose()));
    let fail = |why: &str| LqrError::RiccatiFailure(why.to_string());
    let z = linalg::matrix_sign(&h).ok_or_else(|| fail("Hamiltonian has eigenvalues on the imaginary axis"))?;
    // [Z12; Z22 + I] P = −[Z11 + I; Z21]
    let mut lhs = DMatrix::zeros(2 * n, n);
    let mut rhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let mut p = lhs.svd(true, true).solve(&rhs, 1e-14).map_err(fail)?;
    p = linalg::sym(&p);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite solution"));
    }
    let scale = p.norm().max(w.q.norm()).max(1.0);
    for _ in 0..8 {
        if are_residual(a, b, w, &rinv, &p) <= 1e-12 * scale {
            break;
        }
        let k = &rinv * (b.transpose() * &p + w.n.transpose());
        let acl = a - b * &k;
        let qk = &w.q - &w.n * &k - k.transpose() * w.n.transpose() + k.transpose() * &w.r * &k;
        match linalg::lyapunov(&acl, &qk) {
            Some(next) if next.iter().all(|v| v.is_finite()) => p = next,
            _ => break,
        }
    }
    let gain = &rinv * (b.transpose() * &p + w.n.transpose());
    let residual = are_residual(a, b, w, &rinv, &p);
    let acl = a - b * &gain;
    if linalg::eigenvalues(&acl).iter().any(|l| l.re >= 0.0) {
        return Err(fail("closed loop is not Hurwitz"));
    }
    Ok(RiccatiSolution { gain, p, residual })
}

/// Closed-loop outcome of one gain.
#[derive(Debug, Clone, Serialize)]
pub struct LqrEvaluation {
    pub gain: DMatrix<f64>,
    /// Energy of the closed loop under the problem's cost matrix.
    pub energy: f64,
    /// `‖s(T) − s_T‖`.
    pub terminal_error: f64,
    pub feasible: bool,
    /// `energy + penalty·terminal_error²`, infinite when infeasible.
    pub fitness: f64,
}

/// Knobs of the closed-loop simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub dt: f64,
    /// Weight on the squared terminal error in the fitness.
    pub terminal_penalty: f64,
    /// Constraint rows checked for feasibility; `None` checks every row that
    /// involves states only (the height bounds of the submersible).
    pub checked_rows: Option<Vec<usize>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { dt: 0.1, terminal_penalty: 1e3, checked_rows: None }
    }
}

/// Rows of `Lz ≤ e` that involve states only.
fn state_rows(form: &BrunovskyForm) -> Vec<usize> {
    let n = form.states();
    (0..form.constraint_count())
        .filter(|&r| form.lmat.row(r).columns(n, form.inputs()).iter().all(|&v| v == 0.0))
        .collect()
}

/// Exact one-step discretization of the affine closed loop.
struct ClosedLoop {
    /// `z = [s; a] = S w` with `w = [s − s_T; 1]`.
    sel: DMatrix<f64>,
    phi: DMatrix<f64>,
    /// Energy over one step is `w'Qd w`.
    qd: DMatrix<f64>,
    steps: usize,
    dt: f64,
}

impl ClosedLoop {
    fn new(gain: &DMatrix<f64>, form: &BrunovskyForm, dt: f64) -> Self {
        let n = form.states();
        let m = form.inputs();
        let a = form.a_canonical();
        let acl = &a - form.b_canonical() * gain;
        // ẇ = M w
        let w = n + 1;
        let mut mm = DMatrix::zeros(w, w);
        mm.view_mut((0, 0), (n, n)).copy_from(&acl);
        mm.view_mut((0, n), (n, 1)).copy_from(&(&a * &form.st));
        let mut sel = DMatrix::zeros(n + m, w);
        sel.view_mut((0, 0), (n, n)).fill_with_identity();
        sel.view_mut((0, n), (n, 1)).copy_from(&form.st);
        sel.view_mut((n, 0), (m, n)).copy_from(&(-gain));
        let kq = sel.transpose() * &form.kmat * &sel;
        let steps = (form.horizon / dt).ceil().max(1.0) as usize;
        let dt = form.horizon / steps as f64;
        // Van Loan: exp([[−M', Kq], [0, M]] dt) = [[·, Φ⁻ᵀ Qd], [0, Φ]]
        let mut vl = DMatrix::zeros(2 * w, 2 * w);
        vl.view_mut((0, 0), (w, w)).copy_from(&(-mm.transpose()));
        vl.view_mut((0, w), (w, w)).copy_from(&kq);
        vl.view_mut((w, w), (w, w)).copy_from(&mm);
        let ex = (vl * dt).exp();
        let phi = ex.view((w, w), (w, w)).into_owned();
        let qd = linalg::sym(&(phi.transpose() * ex.view((0, w), (w, w))));
        Self { sel, phi, qd, steps, dt }
    }

    fn start(form: &BrunovskyForm) -> DVector<f64> {
        let n = form.states();
        let mut w = DVector::zeros(n + 1);
        w.rows_mut(0, n).copy_from(&(&form.s0 - &form.st));
        w[n] = 1.0;
        w
    }
}

/// Simulate `a = −K (s − s_T)` from `s_0` over the horizon.
///
/// The closed loop is affine in the error, so each step is the exact matrix
/// exponential and the energy over a step is an exact Van Loan integral.
pub fn simulate(gain: &DMatrix<f64>, form: &BrunovskyForm, cfg: &SimulationConfig) -> LqrEvaluation {
    let n = form.states();
    let cl = ClosedLoop::new(gain, form, cfg.dt);
    let rows = cfg.checked_rows.clone().unwrap_or_else(|| state_rows(form));
    let lz = &form.lmat * &cl.sel;
    let check = |st: &DVector<f64>| rows.iter().all(|&r| lz.row(r).dot(&st.transpose()) - form.evec[r] <= 1e-9);
    let mut state = ClosedLoop::start(form);
    let mut energy = 0.0;
    let mut feasible = check(&state);
    for _ in 0..cl.steps {
        energy += (state.transpose() * &cl.qd * &state)[0];
        state = &cl.phi * &state;
        if !state.iter().all(|v| v.is_finite()) {
            feasible = false;
            break;
        }
        feasible &= check(&state);
    }
    let terminal_error = state.rows(0, n).norm();
    let fitness = if feasible && energy.is_finite() {
        energy + cfg.terminal_penalty * terminal_error * terminal_error
    } else {
        f64::INFINITY
    };
    LqrEvaluation { gain: gain.clone(), energy, terminal_error, feasible, fitness }
}

/// Closed-loop samples `(t, z)` with `z = [s; a]`, one per simulation step.
pub fn trace(gain: &DMatrix<f64>, form: &BrunovskyForm, dt: f64) -> Vec<(f64, DVector<f64>)> {
    let cl = ClosedLoop::new(gain, form, dt);
    let mut state = ClosedLoop::start(form);
    let mut out = Vec::with_capacity(cl.steps + 1);
    for k in 0..=cl.steps {
        out.push((k as f64 * cl.dt, &cl.sel * &state));
        state = &cl.phi * &state;
    }
    out
}

/// Solve the Riccati equation for `weights` and simulate; failures get infinite fitness.
pub fn evaluate(weights: &LqrWeights, form: &BrunovskyForm, cfg: &SimulationConfig) -> LqrEvaluation {
    match solve_riccati(&form.a_canonical(), &form.b_canonical(), weights) {
        Ok(sol) => simulate(&sol.gain, form, cfg),
        Err(_) => LqrEvaluation {
            gain: DMatrix::zeros(form.inputs(), form.states()),
            energy: f64::INFINITY,
            terminal_error: f64::INFINITY,
            feasible: false,
            fitness: f64::INFINITY,
        },
    }
}

/// Settings of the weight search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub elites: usize,
    pub max_generations: usize,
    /// Stop after this many generations without improvement of the best fitness.
    pub stall_generations: usize,
    pub crossover_fraction: f64,
    /// Standard deviation of the initial spread and of the first mutations.
    pub mutation_scale: f64,
    pub tournament: usize,
    pub seed: u64,
    pub simulation: SimulationConfig,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 200,
            elites: 10,
            max_generations: 2800,
            stall_generations: 50,
            crossover_fraction: 0.8,
            mutation_scale: 0.5,
            tournament: 2,
            seed: 7,
            simulation: SimulationConfig::default(),
        }
    }
}

/// One generation of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    /// Mean over feasible individuals.
    pub mean_fitness: f64,
    pub infeasible_fraction: f64,
}

/// Outcome of [`optimize_weights`].
#[derive(Debug, Clone, Serialize)]
pub struct GaReport {
    pub best: LqrWeights,
    pub evaluation: LqrEvaluation,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    pub infeasible_evaluations: usize,
}

impl GaReport {
    pub fn infeasible_fraction(&self) -> f64 {
        self.infeasible_evaluations as f64 / self.evaluations.max(1) as f64
    }
}

fn stream(seed: u64, generation: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index as u64);
    rng
}

/// Genetic search over the LQR weights of `form`, starting around identity weights.
pub fn optimize_weights(form: &BrunovskyForm, cfg: &GaConfig) -> GaReport {
    let start = LqrWeights::identity(form.states(), form.inputs()).to_params();
    let initial: Vec<Vec<f64>> = (0..cfg.population)
        .map(|i| {
            if i == 0 {
                return start.clone();
            }
            let mut rng = stream(cfg.seed, 0, i);
            let noise = Normal::new(0.0, cfg.mutation_scale.max(0.0)).expect("finite scale");
            start.iter().map(|&v| v + noise.sample(&mut rng)).collect()
        })
        .collect();
    optimize_from(form, cfg, initial)
}

/// Genetic search from a given initial population.
pub fn optimize_from(form: &BrunovskyForm, cfg: &GaConfig, initial: Vec<Vec<f64>>) -> GaReport {
    let (n, m) = (form.states(), form.inputs());
    let eval = |genes: &Vec<f64>| evaluate(&LqrWeights::from_params(genes, n, m), form, &cfg.simulation);
    let mut pop: Vec<(Vec<f64>, LqrEvaluation)> = initial
        .into_par_iter()
        .map(|g| {
            let e = eval(&g);
            (g, e)
        })
        .collect();
    let mut evaluations = pop.len();
    let mut infeasible = pop.iter().filter(|p| !p.1.fitness.is_finite()).count();
    let mut history = Vec::new();
    let mut stall = 0;
    let mut best_so_far = f64::INFINITY;
    for generation in 0..cfg.max_generations {
        pop.sort_by(|a, b| a.1.fitness.total_cmp(&b.1.fitness));
        let best = pop[0].1.fitness;
        let finite: Vec<f64> = pop.iter().map(|p| p.1.fitness).filter(|f| f.is_finite()).collect();
        history.push(GenerationStats {
            generation,
            best_fitness: best,
            mean_fitness: if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
            infeasible_fraction: 1.0 - finite.len() as f64 / pop.len() as f64,
        });
        if best < best_so_far - 1e-9 * best_so_far.abs().min(1e300) {
            best_so_far = best;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_generations {
                break;
            }
        }
        if generation + 1 == cfg.max_generations {
            break;
        }
        let scale = cfg.mutation_scale * (1.0 - generation as f64 / cfg.max_generations as f64);
        let elites = cfg.elites.min(pop.len());
        let children: Vec<Vec<f64>> = (elites..pop.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(cfg.seed, generation + 1, i);
                let pick = |rng: &mut ChaCha8Rng| {
                    (0..cfg.tournament.max(1))
                        .map(|_| rng.gen_range(0..pop.len()))
                        .min_by(|&a, &b| pop[a].1.fitness.total_cmp(&pop[b].1.fitness))
                        .expect("tournament has entrants")
                };
                let a = pick(&mut rng);
                if rng.gen::<f64>() < cfg.crossover_fraction {
                    let b = pick(&mut rng);
                    pop[a].0.iter().zip(&pop[b].0).map(|(&x, &y)| if rng.gen::<bool>() { x } else { y }).collect()
                } else if scale > 0.0 {
                    let noise = Normal::new(0.0, scale).expect("finite scale");
                    pop[a].0.iter().map(|&x| x + noise.sample(&mut rng)).collect()
                } else {
                    pop[a].0.clone()
                }
            })
            .collect();
        let evaluated: Vec<(Vec<f64>, LqrEvaluation)> = children
            .into_par_iter()
            .map(|g| {
                let e = eval(&g);
                (g, e)
            })
            .collect();
        evaluations += evaluated.len();
        infeasible += evaluated.iter().filter(|p| !p.1.fitness.is_finite()).count();
        pop.truncate(elites);
        pop.extend(evaluated);
    }
    pop.sort_by(|a, b| a.1.fitness.total_cmp(&b.1.fitness));
    let (genes, evaluation) = pop.swap_remove(0);
    GaReport {
        best: LqrWeights::from_params(&genes, n, m),
        evaluation,
        history,
        evaluations,
        infeasible_evaluations: infeasible,
    }
}
