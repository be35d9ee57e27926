use super::Array2;

/// Central finite-difference gradient check.
///
/// `forward` evaluates the scalar objective at a point; `analytic` is the
/// gradient under test at `point`. Each coordinate is perturbed by ±eps and
/// the central difference is compared against the analytic value. Returns
/// the maximum relative error
/// |analytic - central| / max(|analytic|, |central|, 1e-8).
pub fn grad_check(
    forward: impl Fn(&Array2) -> f64,
    analytic: &Array2,
    point: &Array2,
    eps: f64,
) -> f64 {
    assert!(
        analytic.same_shape(point),
        "analytic gradient shape {:?} does not match point shape {:?}",
        analytic.shape(),
        point.shape()
    );
    let mut max_err = 0.0f64;
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let plus = forward(&probe);
        probe.as_mut_slice()[i] = orig - eps;
        let minus = forward(&probe);
        probe.as_mut_slice()[i] = orig;

        let central = (plus - minus) / (2.0 * eps);
        let a = analytic.as_slice()[i];
        let err = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
        max_err = max_err.max(err);
    }
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_for_central_differences() {
        // f(x) = x^2 at x = 3: central differences are exact for polynomials
        // of degree <= 2, so the error is dominated by rounding.
        let point = Array2::from_vec(1, 1, vec![3.0]).unwrap();
        let analytic = Array2::from_vec(1, 1, vec![6.0]).unwrap();
        let err = grad_check(
            |p| p.as_slice()[0] * p.as_slice()[0],
            &analytic,
            &point,
            1e-4,
        );
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let point = Array2::from_vec(1, 1, vec![2.0]).unwrap();
        let wrong = Array2::from_vec(1, 1, vec![1.0]).unwrap();
        let err = grad_check(
            |p| p.as_slice()[0] * p.as_slice()[0],
            &wrong,
            &point,
            1e-4,
        );
        assert!(err > 0.5, "expected a large error, got {err}");
    }
}
