//! Central finite-difference verification of analytic gradients.

use num_traits::Float;

use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error<S: Scalar>(analytic: S, numeric: S) -> S {
    let denom = analytic.abs().max(numeric.abs()).max(S::lit(1e-8));
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport<S> {
    pub max_relative_error: S,
    /// Parameter name and flat offset of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric values at the worst entry.
    pub worst_values: Option<(S, S)>,
    pub checked: usize,
}

/// Compares the gradients stored in `params` against central differences
/// `(f(p + eps) - f(p - eps)) / (2 eps)`, entry by entry.
pub fn grad_check<S, F>(params: &ParamStore<S>, eps: S, f: F) -> Result<GradCheckReport<S>>
where
    S: Scalar,
    F: FnMut(&ParamStore<S>) -> S,
{
    grad_check_with(params, eps, f)
}

/// Like [`grad_check`], but the objective returns `T` and the difference
/// quotient is formed in `T` before rounding back to `S`. With a wider `T`
/// the cancellation in `f(p + eps) - f(p - eps)` no longer limits accuracy.
pub fn grad_check_with<S, T, F>(params: &ParamStore<S>, eps: S, mut f: F) -> Result<GradCheckReport<S>>
where
    S: Scalar,
    T: Float,
    F: FnMut(&ParamStore<S>) -> T,
{
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: S::zero(),
        worst: None,
        worst_values: None,
        checked: 0,
    };
    for t in 0..params.len() {
        let id = ParamId(t);
        for offset in 0..params.value(id).len() {
            let original = params.value(id).as_slice()[offset];
            let up = original + eps;
            let down = original - eps;
            *probe.scalar_mut(id, offset) = up;
            let plus = f(&probe);
            *probe.scalar_mut(id, offset) = down;
            let minus = f(&probe);
            *probe.scalar_mut(id, offset) = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective at {}[{offset}]",
                    params.name(id)
                )));
            }
            // Divide by the step actually taken after rounding.
            let step = T::from(up.as_f64()).unwrap() - T::from(down.as_f64()).unwrap();
            let numeric = S::lit(((plus - minus) / step).to_f64().unwrap_or(f64::NAN));
            let analytic = params.grad(id).as_slice()[offset];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((params.name(id).to_string(), offset));
                report.worst_values = Some((analytic, numeric));
            }
        }
    }
    Ok(report)
}
