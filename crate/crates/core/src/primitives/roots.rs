use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::{PrimitiveError, PrimitiveOde};
use crate::linalg;

/// Relative distance under which roots are merged into one multiple root.
pub const CLUSTER_TOL: f64 = 1e-7;

/// One family of basis functions `t^p e^{σt} cos ωt` (and `sin ωt` when `ω > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub sigma: f64,
    pub omega: f64,
    pub power: usize,
}

impl Mode {
    /// Number of real basis functions this mode contributes.
    pub fn width(&self) -> usize {
        if self.omega > 0.0 {
            2
        } else {
            1
        }
    }
}

/// A root of the characteristic polynomial with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
}

/// Real fundamental system of a constant-coefficient linear ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionBasis {
    pub roots: Vec<Root>,
    pub modes: Vec<Mode>,
    pub dimension: usize,
}

impl SolutionBasis {
    /// Evaluate all basis functions and their derivatives up to `order` at `t`.
    ///
    /// Row `d` holds the `d`-th derivative of every basis function.
    pub fn evaluate(&self, t: f64, order: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(order + 1, self.dimension);
        let mut col = 0;
        for mode in &self.modes {
            let lam = Complex::new(mode.sigma, mode.omega);
            for d in 0..=order {
                // d/dt^d [t^p e^{λt}] = Σ_r C(d,r) p!/(p−r)! t^{p−r} λ^{d−r} e^{λt}
                let mut acc = Complex::new(0.0, 0.0);
                let mut binom = 1.0;
                for r in 0..=d.min(mode.power) {
                    if r > 0 {
                        binom *= (d - r + 1) as f64 / r as f64;
                    }
                    let falling: f64 = (0..r).map(|i| (mode.power - i) as f64).product();
                    let tp = t.powi((mode.power - r) as i32);
                    acc += lam.powu((d - r) as u32) * (binom * falling * tp);
                }
                let v = acc * (lam * t).exp();
                out[(d, col)] = v.re;
                if mode.width() == 2 {
                    out[(d, col + 1)] = v.im;
                }
            }
            col += mode.width();
        }
        out
    }

    /// Wronskian matrix at `t` (square, size = dimension).
    pub fn wronskian(&self, t: f64) -> DMatrix<f64> {
        self.evaluate(t, self.dimension.saturating_sub(1))
    }
}

/// Roots of a real polynomial (ascending coefficients) with multiplicity clustering.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Root>, PrimitiveError> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Err(PrimitiveError::DegenerateOde);
    }
    let tiny = 1e-14 * scale;
    let top = coeffs.iter().rposition(|c| c.abs() > tiny).expect("nonzero coefficient");
    let low = coeffs.iter().position(|c| c.abs() > tiny).expect("nonzero coefficient");
    let mut roots = Vec::new();
    if low > 0 {
        roots.push(Root { re: 0.0, im: 0.0, multiplicity: low });
    }
    let reduced: Vec<f64> = coeffs[low..=top].to_vec();
    let deg = reduced.len() - 1;
    if deg == 0 {
        return Ok(roots);
    }
    let lead = reduced[deg];
    let mut comp = DMatrix::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -reduced[i] / lead;
    }
    let mut eig = linalg::eigenvalues(&comp);
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let mut used = vec![false; eig.len()];
    let mut clusters: Vec<(Complex<f64>, usize)> = Vec::new();
    for i in 0..eig.len() {
        if used[i] {
            continue;
        }
        let radius = cluster_radius(&eig, i);
        let mut members = Vec::new();
        for j in i..eig.len() {
            if !used[j] && (eig[j] - eig[i]).norm() <= radius {
                members.push(eig[j]);
                used[j] = true;
            }
        }
        let mean = members.iter().fold(Complex::new(0.0, 0.0), |a, b| a + b) / members.len() as f64;
        clusters.push((mean, members.len()));
    }

    for (z, mult) in clusters {
        let tol = CLUSTER_TOL * z.norm().max(1.0);
        if z.im < -tol {
            continue;
        }
        let im = if z.im.abs() <= tol { 0.0 } else { z.im };
        let root = Complex::new(z.re, im);
        if mult == 1 {
            let value = linalg::poly_eval(&reduced, root).norm();
            let terms: f64 = reduced.iter().enumerate().map(|(k, c)| c.abs() * root.norm().powi(k as i32)).sum();
            if value > 1e-9 * terms {
                return Err(PrimitiveError::RootResidual { re: root.re, im, residual: value / terms });
            }
        }
        roots.push(Root { re: root.re, im, multiplicity: mult });
    }
    Ok(roots)
}

/// Distance used to decide whether two companion eigenvalues belong to one
/// multiple root. Eigenvalues of a multiplicity-`p` root spread like `ε^{1/p}`,
/// so the radius has to grow with the size of the suspected cluster.
fn cluster_radius(eig: &[Complex<f64>], i: usize) -> f64 {
    let base = eig[i];
    let scale = base.norm().max(1.0);
    let mut count = 1;
    for (j, z) in eig.iter().enumerate() {
        if j != i && (*z - base).norm() <= 1e-3 * scale {
            count += 1;
        }
    }
    if count == 1 {
        CLUSTER_TOL * scale
    } else {
        (2.2e-16f64).powf(1.0 / count as f64) * 10.0 * scale
    }
}

/// Real solution basis of the chain's characteristic polynomial.
pub fn characteristic_roots(ode: &PrimitiveOde) -> Result<SolutionBasis, PrimitiveError> {
    let poly = ode.characteristic_polynomial();
    let roots = polynomial_roots(&poly)?;
    let mut modes = Vec::new();
    let mut dimension = 0;
    for r in &roots {
        for p in 0..r.multiplicity {
            let m = Mode { sigma: r.re, omega: r.im, power: p };
            dimension += m.width();
            modes.push(m);
        }
    }
    Ok(SolutionBasis { roots, modes, dimension })
}
