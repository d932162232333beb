//! Central finite-difference verification of analytic gradients.

use alloc::vec::Vec;

use crate::tensor::Tensor2D;
use crate::{Error, Result};

/// Numerical gradient of a scalar function by central differences,
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: "central_difference",
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> Result<f64> {
    if analytic.len() != numeric.len() {
        return Err(Error::LengthMismatch {
            context: "max_relative_error",
            expected: numeric.len(),
            found: analytic.len(),
        });
    }
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        if !a.is_finite() || !n.is_finite() {
            return Err(Error::NonFinite {
                context: "max_relative_error",
            });
        }
        worst = worst.max((a - n).abs() / n.abs().max(1.0));
    }
    Ok(worst)
}

/// Compares an analytic gradient of the scalar `f` at `x` against central
/// differences with step `h` and returns the maximum relative error.
pub fn finite_diff_check<F>(f: F, x: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let numeric = central_difference(f, x, h)?;
    max_relative_error(analytic, &numeric)
}

/// `sum(t .* w)`: reduces a tensor output to a scalar with fixed cotangent
/// weights, so the matching VJP seed is `w` itself.
pub fn weighted_sum(t: &Tensor2D, w: &Tensor2D) -> f64 {
    debug_assert_eq!(t.shape(), w.shape());
    t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gradient() {
        let f = |x: &[f64]| Ok(x[0] * x[0] * x[0] + 2.0 * x[1]);
        let x = [1.5, -3.0];
        let err = finite_diff_check(f, &x, &[3.0 * 2.25, 2.0], 1e-6).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |x: &[f64]| Ok(x[0] * x[0]);
        let err = finite_diff_check(f, &[2.0], &[3.0], 1e-6).unwrap();
        assert!((err - 0.25).abs() < 1e-6);
    }

    #[test]
    fn non_finite_is_an_error() {
        let f = |x: &[f64]| Ok(1.0 / x[0]);
        assert!(matches!(
            finite_diff_check(f, &[0.0], &[0.0], 0.0),
            Err(Error::InvalidConfig(_))
        ));
        let f = |x: &[f64]| Ok(if x[0] > 0.0 { f64::INFINITY } else { 0.0 });
        assert!(matches!(
            finite_diff_check(f, &[0.0], &[0.0], 1e-3),
            Err(Error::NonFinite { .. })
        ));
    }
}
