//! Central finite-difference verification of analytic gradients.

/// Max over coordinates of `|analytic - numeric| / max(1, |analytic|)`, with
/// `numeric` the central difference of `f` at `point` using `step`.
///
/// Any non-finite evaluation makes the result infinite.
pub fn max_relative_error<F>(f: F, analytic: &[f64], point: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    assert_eq!(analytic.len(), point.len());
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if !err.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}

/// Same check for a function that reports its own gradient.
pub fn grad_check<F>(f: F, point: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(point);
    max_relative_error(|x| f(x).0, &analytic, point, step)
}
