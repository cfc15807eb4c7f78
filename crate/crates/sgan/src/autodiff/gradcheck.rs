//! Central finite-difference oracles for gradient checks.
//!
//! The comparison statistic is a per-component relative error with an
//! absolute floor: `|a−n| / max(|a|, |n|, FLOOR)`. The floor keeps
//! components whose true gradient is below finite-difference noise from
//! dominating the check; components at scale ≥ FLOOR are compared
//! relatively.

/// Scale below which errors are measured absolutely (relative to the floor).
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Worst per-component relative error (with the documented floor).
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_matches_polynomial_derivative() {
        // f(x,y) = x²y + 3y, df/dx = 2xy, df/dy = x² + 3.
        let f = |v: &[f64]| v[0] * v[0] * v[1] + 3.0 * v[1];
        let x = [1.5, -0.7];
        let num = fd_grad(f, &x, FD_STEP);
        let ana = [2.0 * x[0] * x[1], x[0] * x[0] + 3.0];
        assert!(max_rel_err(&ana, &num) < 1e-8);
    }

    #[test]
    fn rel_err_floor_tolerates_tiny_components() {
        assert!(max_rel_err(&[1e-9], &[2e-9]) < 1e-5);
        assert!(max_rel_err(&[1.0], &[1.1]) > 0.09);
    }
}
