//! Adaptive quadrature on top of the double-exponential rule.

const MAX_DEPTH: u32 = 24;

/// `∫_a^b f` to absolute tolerance `tol`, bisecting where the rule's own error
/// estimate is too large.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    recurse(&f, a, b, tol, 0)
}

fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let out = quadrature::integrate(f, a, b, tol);
    if out.error_estimate <= tol || depth >= MAX_DEPTH || !out.integral.is_finite() {
        return out.integral;
    }
    let mid = 0.5 * (a + b);
    recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
}
