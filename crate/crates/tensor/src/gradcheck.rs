//! Finite-difference gradient checking.
//!
//! The pattern: express the quantity under test as a scalar function of a
//! flat parameter vector, get the analytic gradient from a backward pass,
//! and compare against central differences of the scalar function.

/// Default central-difference step. With f64 arithmetic and O(1) values this
/// balances truncation (h^2) against roundoff (eps/h) noise.
pub const FD_STEP: f64 = 1e-5;

/// Default acceptance threshold for [`max_rel_err`].
pub const FD_TOL: f64 = 1e-4;

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let f_plus = f(&xs);
        xs[i] = orig - h;
        let f_minus = f(&xs);
        xs[i] = orig;
        out.push((f_plus - f_minus) / (2.0 * h));
    }
    out
}

/// Worst relative disagreement between two gradient vectors, with the
/// denominator floored at 1e-6 so near-zero entries are compared absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Checks `analytic` against central differences of `f` at `x`.
/// Returns the worst relative error, or an error string naming the worst
/// coordinate if it exceeds `tol`.
pub fn check_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
) -> Result<f64, String> {
    let numeric = central_diff(f, x, h);
    let mut worst = 0.0;
    let mut worst_i = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        if rel > worst {
            worst = rel;
            worst_i = i;
        }
    }
    if worst <= tol {
        Ok(worst)
    } else {
        Err(format!(
            "gradient mismatch at index {worst_i}: analytic {} vs numeric {} (rel {worst:.3e}, tol {tol:.1e})",
            analytic[worst_i], numeric[worst_i]
        ))
    }
}
