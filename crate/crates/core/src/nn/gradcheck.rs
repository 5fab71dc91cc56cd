use crate::error::{Error, Result};

/// Worst relative error between `analytic` and central differences of `f`
/// over every coordinate of `params`. The denominator is floored at 1e-8.
pub fn grad_check(
    f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<f64> {
    let all: Vec<usize> = (0..params.len()).collect();
    grad_check_subset(f, params, analytic, h, &all)
}

/// [`grad_check`] restricted to the coordinates in `indices`.
pub fn grad_check_subset(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    indices: &[usize],
) -> Result<f64> {
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for &k in indices {
        let orig = p[k];
        p[k] = orig + h;
        let up = f(&p);
        p[k] = orig - h;
        let dn = f(&p);
        p[k] = orig;
        if !(up.is_finite() && dn.is_finite()) {
            return Err(Error::NonFinite(format!(
                "objective not finite around coordinate {k}"
            )));
        }
        let numeric = (up - dn) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(p: &[f64]) -> f64 {
        3.0 * p[0] * p[0] - 2.0 * p[0] * p[1] + 0.5 * p[1] * p[1] + p[1]
    }

    fn quad_grad(p: &[f64]) -> Vec<f64> {
        vec![6.0 * p[0] - 2.0 * p[1], -2.0 * p[0] + p[1] + 1.0]
    }

    #[test]
    fn quadratic_is_exact_up_to_roundoff() {
        let p = [0.7, -1.3];
        let err = grad_check(quad, &p, &quad_grad(&p), 1e-4).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn linear_is_exact() {
        let p = [2.0, 5.0, -1.0];
        let err = grad_check(|p| 3.0 * p[0] - p[1] + 0.25 * p[2], &p, &[3.0, -1.0, 0.25], 1e-3).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let p = [0.7, -1.3];
        let bad: Vec<f64> = quad_grad(&p).iter().map(|g| g * 1.01).collect();
        let err = grad_check(quad, &p, &bad, 1e-4).unwrap();
        assert!(err >= 0.009, "{err}");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        assert!(grad_check(|p| (p[0] - 1.0).ln(), &[1.0], &[1.0], 1e-3).is_err());
    }
}
