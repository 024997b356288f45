//! Gradient verification via central finite differences, plus the L2
//! penalty term (which is simplest to verify through the same harness).

use crate::tensor::{Scalar, Tensor};

/// Per-coordinate outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Relative error per coordinate: `|a - n| / max(|a|, |n|, 1e-8)`.
    pub rel_errors: Vec<f64>,
    /// Coordinates whose error exceeds the tolerance, or whose numeric or
    /// analytic value is non-finite.
    pub failures: Vec<usize>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares `analytic` against central differences
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` of the scalar function `f`.
pub fn finite_diff_check<F>(
    f: F,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut x = params.to_vec();
    let mut rel_errors = Vec::with_capacity(params.len());
    let mut failures = Vec::new();
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let plus = f(&x);
        x[i] = orig - epsilon;
        let minus = f(&x);
        x[i] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        rel_errors.push(rel);
        if !numeric.is_finite() || !a.is_finite() || rel > tolerance {
            failures.push(i);
        }
    }
    GradCheckReport {
        rel_errors,
        failures,
        tolerance,
    }
}

/// L2 weight penalty: loss term `lambda * sum(w^2)` and its gradient
/// `2 * lambda * w` per weight.
pub fn l2_penalty<E: Scalar>(params: &Tensor<E>, lambda: E) -> (E, Tensor<E>) {
    let mut loss = E::ZERO;
    for &w in params.iter() {
        loss += w * w;
    }
    let two_lambda = lambda + lambda;
    (lambda * loss, params.map(|w| two_lambda * w))
}
