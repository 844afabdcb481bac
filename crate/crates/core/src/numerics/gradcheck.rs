//! Central finite-difference gradient oracle.
//!
//! Used by the test suites to validate every analytic gradient against an
//! implementation-independent numeric estimate. Needs `f64` inputs to reach
//! the documented tolerances.

/// Central-difference gradient of a scalar function at `x`.
pub fn central_difference<F>(f: &F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe);
        probe[i] = orig - step;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Central difference restricted to selected coordinates.
pub fn central_difference_at<F>(f: &F, x: &[f64], step: f64, coords: &[usize]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; coords.len()];
    let mut probe = x.to_vec();
    for (slot, &i) in grad.iter_mut().zip(coords) {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe);
        probe[i] = orig - step;
        let minus = f(&probe);
        probe[i] = orig;
        *slot = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Maximum relative error between two gradient vectors.
///
/// The denominator is floored at 1e-6 so near-zero coordinates compare by
/// absolute difference instead of blowing up.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / n.abs().max(a.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
