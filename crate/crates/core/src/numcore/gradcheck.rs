//! Central finite-difference verification of analytic gradients.

/// Largest relative discrepancy between `analytic` and central differences
/// of `loss` at `theta`, over the indices in `sample`.
///
/// Relative error is `|analytic − numeric| / max(|analytic|, 1e-12)`.
pub fn finite_diff_check<F>(theta: &[f64], analytic: &[f64], h: f64, sample: &[usize], mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    assert_eq!(theta.len(), analytic.len());
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for &i in sample {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1e-12);
        worst = worst.max(err);
    }
    worst
}
