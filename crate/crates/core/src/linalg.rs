//! Dense linear-algebra helpers shared by the solver modules.

use nalgebra::{Complex, DMatrix, DVector};

/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank with singular values measured relative to the largest one.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Smallest singular value (zero for empty matrices).
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// 2-norm condition number; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Orthonormal basis of the column space, chosen from the dominant left singular vectors.
pub fn column_basis(m: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(m.nrows(), dim);
    for (k, &i) in order.iter().take(dim).enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Solve a square system through LU, reporting failure on singularity.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}

/// Solve a square system through LU for a vector right-hand side.
pub fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

/// Matrix sign function by scaled Newton iteration.
///
/// Returns `None` when an iterate becomes singular, which happens when the
/// spectrum touches the imaginary axis.
pub fn matrix_sign(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut x = m.clone();
    for it in 0..100 {
        let lu = x.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse()?;
        if !det.is_finite() || det == 0.0 {
            return None;
        }
        let c = if it < 40 { det.abs().powf(-1.0 / n as f64) } else { 1.0 };
        let next = (&x * c + &inv / c) * 0.5;
        let delta = (&next - &x).norm();
        let scale = next.norm();
        x = next;
        if !scale.is_finite() {
            return None;
        }
        if delta <= 1e-14 * scale {
            break;
        }
        if it == 99 {
            return None;
        }
    }
    Some(x)
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    // Unbounded Schur iteration can cycle on some defective matrices, so cap it
    // and retry on shifted or transposed copies, which have the same spectrum.
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let attempts = [(0.0, false), (0.0, true), (0.37 * scale, false), (-0.61 * scale, true)];
    for (shift, transpose) in attempts {
        let mut work = if transpose { m.transpose() } else { m.clone() };
        for i in 0..n {
            work[(i, i)] += shift;
        }
        if let Some(schur) = nalgebra::linalg::Schur::try_new(work, f64::EPSILON, 200 * n.max(10)) {
            return schur.complex_eigenvalues().iter().map(|z| z - shift).collect();
        }
    }
    panic!("eigenvalue iteration failed to converge")
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Symmetric part.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym(m).symmetric_eigenvalues().min()
}

/// Solve the Lyapunov equation `A' X + X A + Q = 0` by vectorization.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let op = kron(&id, &a.transpose()) + kron(&a.transpose(), &id);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = solve_vec(&op, &rhs)?;
    Some(sym(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Horner evaluation of a real polynomial (coefficient `i` multiplies `x^i`) at a complex point.
pub fn poly_eval(coeffs: &[f64], x: Complex<f64>) -> Complex<f64> {
    coeffs.iter().rev().fold(Complex::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Product of two polynomials in ascending-power layout.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 0.5, 2.0]));
        let s = matrix_sign(&m).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        assert!((s - expect).norm() < 1e-12);
    }

    #[test]
    fn sign_squares_to_identity() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 4.0, -2.0, 0.3, -2.0, 1.0, 5.0, 0.0, 3.0]);
        let s = matrix_sign(&m).unwrap();
        assert!((&s * &s - DMatrix::identity(3, 3)).norm() < 1e-10);
        assert!((&s * &m - &m * &s).norm() < 1e-9);
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let q = DMatrix::from_element(1, 1, 4.0);
        let x = lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn poly_helpers() {
        assert_eq!(poly_mul(&[1.0, 1.0], &[-1.0, 1.0]), vec![-1.0, 0.0, 1.0]);
        let v = poly_eval(&[-1.0, 0.0, 1.0], Complex::new(1.0, 0.0));
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn rank_detects_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank(&m, RANK_TOL), 1);
        assert_eq!(min_singular_value(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])), 0.0);
    }
}
