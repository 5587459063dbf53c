//! Central finite-difference utilities backing every gradient check.

/// Central difference of a scalar-valued function at `params`, one
/// coordinate at a time.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            probe[i] = params[i] + h;
            let plus = f(&probe);
            probe[i] = params[i] - h;
            let minus = f(&probe);
            probe[i] = params[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// |a - b| relative to the larger magnitude, floored so near-zero pairs
/// compare absolutely at 1e-6 scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error between an analytic gradient and its
/// finite-difference estimate.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
