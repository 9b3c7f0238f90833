use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{validate, Coordinates, LqProblem, ModelError};
use crate::linalg;

/// Column layout of the stacked vector `z = [s; a]` in chain coordinates.
///
/// States of chain `i` occupy a contiguous block of `s`; its control is `a_i`.
/// Derivative order `j < k_i` of chain `i` sits at column `offset_i + j` and
/// order `j = k_i` (the control) at column `n + i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLayout {
    pub chains: Vec<usize>,
    offsets: Vec<usize>,
}

impl ChainLayout {
    pub fn new(chains: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(chains.len());
        let mut acc = 0;
        for &k in &chains {
            offsets.push(acc);
            acc += k;
        }
        Self { chains, offsets }
    }

    /// Number of states `n`.
    pub fn states(&self) -> usize {
        self.chains.iter().sum()
    }

    /// Number of chains (= inputs) `m`.
    pub fn inputs(&self) -> usize {
        self.chains.len()
    }

    /// Length of `z`.
    pub fn width(&self) -> usize {
        self.states() + self.inputs()
    }

    /// Column of derivative order `j` (0..=k_i) of chain `i`.
    pub fn column(&self, chain: usize, order: usize) -> usize {
        let k = self.chains[chain];
        assert!(order <= k, "order {order} exceeds chain length {k}");
        if order < k {
            self.offsets[chain] + order
        } else {
            self.states() + chain
        }
    }

    /// Index into `s` of state `j < k_i` of chain `i`.
    pub fn state_index(&self, chain: usize, order: usize) -> usize {
        assert!(order < self.chains[chain]);
        self.offsets[chain] + order
    }

    /// Columns of chain `i` in derivative order `0..=k_i`.
    pub fn chain_columns(&self, chain: usize) -> Vec<usize> {
        (0..=self.chains[chain]).map(|j| self.column(chain, j)).collect()
    }

    /// Chain and derivative order owning column `col`.
    pub fn owner(&self, col: usize) -> (usize, usize) {
        let n = self.states();
        if col >= n {
            let i = col - n;
            return (i, self.chains[i]);
        }
        let i = self.offsets.iter().rposition(|&o| o <= col).expect("column inside state block");
        (i, col - self.offsets[i])
    }

    /// Canonical drift matrix: shifted identity blocks.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.states();
        let mut a = DMatrix::zeros(n, n);
        for (i, &k) in self.chains.iter().enumerate() {
            for j in 0..k.saturating_sub(1) {
                a[(self.offsets[i] + j, self.offsets[i] + j + 1)] = 1.0;
            }
        }
        a
    }

    /// Canonical input matrix: unit entry at the top of each chain.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.states(), self.inputs());
        for (i, &k) in self.chains.iter().enumerate() {
            b[(self.offsets[i] + k - 1, i)] = 1.0;
        }
        b
    }
}

/// A problem rewritten as `m` decoupled integrator chains.
///
/// `s = Tx · x` and `a = F x + G u`. Cost and constraints are expressed in
/// the stacked `z = [s; a]` so that `z'Kz` and `Lz − e` take the same values
/// as the original running cost and constraint residuals.
#[derive(Debug, Clone)]
pub struct BrunovskyForm {
    pub layout: ChainLayout,
    pub tx: DMatrix<f64>,
    pub tx_inv: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub kmat: DMatrix<f64>,
    pub lmat: DMatrix<f64>,
    pub evec: DVector<f64>,
    pub s0: DVector<f64>,
    pub st: DVector<f64>,
    pub horizon: f64,
    pub problem: LqProblem,
}

impl BrunovskyForm {
    pub fn chains(&self) -> &[usize] {
        &self.layout.chains
    }

    pub fn states(&self) -> usize {
        self.layout.states()
    }

    pub fn inputs(&self) -> usize {
        self.layout.inputs()
    }

    pub fn constraint_count(&self) -> usize {
        self.lmat.nrows()
    }

    /// Canonical `A`.
    pub fn a_canonical(&self) -> DMatrix<f64> {
        self.layout.a_matrix()
    }

    /// Canonical `B`.
    pub fn b_canonical(&self) -> DMatrix<f64> {
        self.layout.b_matrix()
    }

    /// `Q` block of `K`.
    pub fn q_block(&self) -> DMatrix<f64> {
        let n = self.states();
        self.kmat.view((0, 0), (n, n)).into_owned()
    }

    /// `N` block of `K`.
    pub fn n_block(&self) -> DMatrix<f64> {
        let (n, m) = (self.states(), self.inputs());
        self.kmat.view((0, n), (n, m)).into_owned()
    }

    /// `R` block of `K`.
    pub fn r_block(&self) -> DMatrix<f64> {
        let (n, m) = (self.states(), self.inputs());
        self.kmat.view((n, n), (m, m)).into_owned()
    }

    /// Running cost `z'Kz`.
    pub fn cost(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.kmat * z)[0]
    }

    /// `L z − e`.
    pub fn constraint_residual(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.lmat * z - &self.evec
    }

    /// Map chain coordinates back to the original state and input.
    pub fn to_original(&self, s: &DVector<f64>, a: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let x = &self.tx_inv * s;
        let u = &self.g_inv * (a - &self.f * &x);
        (x, u)
    }

    /// Map an original state and input to chain coordinates.
    pub fn from_original(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.tx * x, &self.f * x + &self.g * u)
    }

    /// Stack `s` and `a` into `z`.
    pub fn stack(&self, s: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.layout.width());
        z.rows_mut(0, s.len()).copy_from(s);
        z.rows_mut(s.len(), a.len()).copy_from(a);
        z
    }
}

/// Per-chain column index sets of `K` and `L`, in derivative order.
pub fn chain_slices(form: &BrunovskyForm) -> Vec<Vec<usize>> {
    (0..form.inputs()).map(|i| form.layout.chain_columns(i)).collect()
}

/// Chain lengths and the cyclic generators selected by the controllability staircase.
fn staircase(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<usize>, DMatrix<f64>), ModelError> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut chains = vec![0usize; m];
    let mut alive = vec![true; m];
    let mut picked: Vec<DVector<f64>> = Vec::new();
    let mut powers: Vec<DVector<f64>> = (0..m).map(|i| b.column(i).into_owned()).collect();
    'outer: for _ in 0..n {
        for i in 0..m {
            if !alive[i] {
                continue;
            }
            let mut trial = picked.clone();
            trial.push(powers[i].clone());
            let mat = DMatrix::from_columns(&trial);
            if linalg::rank(&mat, linalg::RANK_TOL) == trial.len() {
                picked = trial;
                chains[i] += 1;
                if picked.len() == n {
                    break 'outer;
                }
            } else {
                alive[i] = false;
            }
        }
        for pw in powers.iter_mut() {
            *pw = a * &*pw;
        }
    }
    if picked.len() < n {
        return Err(ModelError::NotControllable { rank: picked.len(), states: n });
    }
    if let Some(i) = chains.iter().position(|&k| k == 0) {
        return Err(ModelError::DegenerateInput { input: i });
    }
    let mut p = DMatrix::zeros(n, n);
    let mut col = 0;
    for (i, &len) in chains.iter().enumerate() {
        let mut v = b.column(i).into_owned();
        for _ in 0..len {
            p.set_column(col, &v);
            v = a * v;
            col += 1;
        }
    }
    Ok((chains, p))
}

/// Transform a validated problem to integrator-chain coordinates.
pub fn to_brunovsky(problem: &LqProblem) -> Result<BrunovskyForm, ModelError> {
    let report = validate(problem)?;
    let ctrb = report.check(super::Assumption::Controllability);
    if !ctrb.passed {
        return Err(ModelError::NotControllable { rank: ctrb.measured as usize, states: problem.state_dim() });
    }
    report.into_result()?;

    let (a, b) = (&problem.a, &problem.b);
    let (n, m) = (problem.state_dim(), problem.input_dim());
    let (chains, p) = staircase(a, b)?;
    let layout = ChainLayout::new(chains.clone());
    let p_inv = p.clone().try_inverse().ok_or(ModelError::NotControllable { rank: n - 1, states: n })?;

    let mut tx = DMatrix::zeros(n, n);
    let mut f = DMatrix::zeros(m, n);
    let mut g = DMatrix::zeros(m, m);
    let mut last = 0;
    for (i, &k) in chains.iter().enumerate() {
        last += k;
        let mut row = p_inv.row(last - 1).into_owned();
        for j in 0..k {
            tx.set_row(layout.state_index(i, j), &row);
            if j + 1 == k {
                g.set_row(i, &(&row * b));
            }
            row = &row * a;
        }
        f.set_row(i, &row);
    }

    let (tx, tx_inv, f, g) = match problem.coordinates {
        Coordinates::Original => {
            let tx_inv = tx.clone().try_inverse().ok_or(ModelError::NotControllable { rank: n - 1, states: n })?;
            (tx, tx_inv, f, g)
        }
        Coordinates::Brunovsky => {
            let id_n = DMatrix::<f64>::identity(n, n);
            let id_m = DMatrix::<f64>::identity(m, m);
            let dev = (&tx - &id_n).abs().max().max(f.abs().max()).max((&g - &id_m).abs().max());
            if dev > 1e-12 || *a != layout.a_matrix() || *b != layout.b_matrix() {
                return Err(ModelError::NotCanonical(format!(
                    "matrices flagged as chain coordinates do not form contiguous integrator chains {chains:?}"
                )));
            }
            (id_n.clone(), id_n, DMatrix::zeros(m, n), id_m)
        }
    };
    let g_inv = g.clone().try_inverse().ok_or(ModelError::DegenerateInput { input: 0 })?;

    // z_orig = M z with M = [[T^-1, 0], [-G^-1 F T^-1, G^-1]]
    let mut mmat = DMatrix::zeros(n + m, n + m);
    mmat.view_mut((0, 0), (n, n)).copy_from(&tx_inv);
    mmat.view_mut((n, 0), (m, n)).copy_from(&(-(&g_inv * &f * &tx_inv)));
    mmat.view_mut((n, n), (m, m)).copy_from(&g_inv);
    let kmat = linalg::sym(&(mmat.transpose() * problem.cost_matrix() * &mmat));
    let lmat = problem.constraint_matrix() * &mmat;

    Ok(BrunovskyForm {
        s0: &tx * &problem.x0,
        st: &tx * &problem.xt,
        layout,
        tx,
        tx_inv,
        f,
        g,
        g_inv,
        kmat,
        lmat,
        evec: problem.e.clone(),
        horizon: problem.horizon,
        problem: problem.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, m: usize, c: usize) -> LqProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        let a = r(n, n);
        let b = r(n, m);
        let gq = r(n, n);
        let gr = r(m, m);
        let nn = r(n, m) * 0.1;
        let cc = r(c, n);
        let dd = r(c, m);
        let e = DVector::from_element(c, 1.0);
        LqProblem::new(
            a,
            b,
            cc,
            dd,
            e,
            gq.transpose() * &gq,
            gr.transpose() * &gr + DMatrix::identity(m, m),
            nn,
            DVector::from_element(n, 0.5),
            DVector::from_element(n, -0.5),
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn double_integrator_is_identity() {
        let p = LqProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
            DMatrix::zeros(2, 1),
            DVector::zeros(2),
            DVector::zeros(2),
            1.0,
        )
        .unwrap();
        let f = to_brunovsky(&p).unwrap();
        assert_eq!(f.chains(), &[2]);
        assert_eq!(f.tx, DMatrix::identity(2, 2));
        assert_eq!(f.g, DMatrix::identity(1, 1));
        let g = to_brunovsky(&p.in_brunovsky_coordinates()).unwrap();
        assert_eq!(g.tx, DMatrix::identity(2, 2));
    }

    #[test]
    fn round_trip_reconstructs_dynamics() {
        for seed in 0..5 {
            let p = random_problem(seed, 3, 1, 0);
            let f = to_brunovsky(&p).unwrap();
            let a = &f.tx_inv * (f.a_canonical() * &f.tx + f.b_canonical() * &f.f);
            let b = &f.tx_inv * f.b_canonical() * &f.g;
            assert!((a - &p.a).abs().max() <= 1e-9, "seed {seed}");
            assert!((b - &p.b).abs().max() <= 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn multi_input_chain_lengths() {
        let p = random_problem(11, 5, 2, 1);
        let f = to_brunovsky(&p).unwrap();
        assert_eq!(f.chains().iter().sum::<usize>(), 5);
        assert_eq!(f.chains(), &[3, 2]);
        let a = &f.tx_inv * (f.a_canonical() * &f.tx + f.b_canonical() * &f.f);
        assert!((a - &p.a).abs().max() <= 1e-9);
    }

    #[test]
    fn slices_follow_layout() {
        let layout = ChainLayout::new(vec![1, 1, 1]);
        let cols: Vec<_> = (0..3).map(|i| layout.chain_columns(i)).collect();
        assert_eq!(cols, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
        let single = ChainLayout::new(vec![1]);
        assert_eq!(single.chain_columns(0), vec![0, 1]);
        let sub = ChainLayout::new(vec![2, 3]);
        assert_eq!(sub.chain_columns(0), vec![0, 1, 5]);
        assert_eq!(sub.chain_columns(1), vec![2, 3, 4, 6]);
        for col in 0..7 {
            let (i, j) = sub.owner(col);
            assert_eq!(sub.column(i, j), col);
        }
    }

    #[test]
    fn uncontrollable_is_rejected() {
        let mut p = random_problem(3, 3, 1, 0);
        p.a = DMatrix::identity(3, 3);
        assert!(matches!(to_brunovsky(&p), Err(ModelError::NotControllable { .. })));
    }

    #[test]
    fn mislabelled_canonical_is_rejected() {
        let p = random_problem(4, 3, 1, 0).in_brunovsky_coordinates();
        assert!(matches!(to_brunovsky(&p), Err(ModelError::NotCanonical(_))));
    }

    #[test]
    fn invariance_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = random_problem(7, 4, 2, 3);
        let f = to_brunovsky(&p).unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let (s, a) = f.from_original(&x, &u);
            let z = f.stack(&s, &a);
            let j0 = p.stage_cost(&x, &u);
            assert!((f.cost(&z) - j0).abs() <= 1e-10 * j0.abs().max(1.0));
            let g0 = p.constraint_residual(&x, &u);
            assert!((f.constraint_residual(&z) - g0).abs().max() <= 1e-10);
            let (x2, u2) = f.to_original(&s, &a);
            assert!((x2 - x).abs().max() <= 1e-10 && (u2 - u).abs().max() <= 1e-10);
        }
    }
}
