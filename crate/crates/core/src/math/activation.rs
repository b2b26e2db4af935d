use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `log(sum(exp(x)))` with max subtraction.
pub fn log_sum_exp<S: Scalar>(x: &[S]) -> S {
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return max;
    }
    let sum: S = x.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place<S: Scalar>(values: &mut [S]) {
    let max = values.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&v| v - lse).collect()
}

/// Cross-entropy of `softmax(logits)` against `target`.
///
/// Returns `(-log p[target], softmax - onehot(target))`.
pub fn softmax_xent<S: Scalar>(logits: &[S], target: usize) -> Result<(S, Vec<S>)> {
    if target >= logits.len() {
        return Err(Error::InvalidToken {
            token: target,
            size: logits.len(),
        });
    }
    let lse = log_sum_exp(logits);
    let loss = lse - logits[target];
    let mut grad: Vec<S> = logits.iter().map(|&v| (v - lse).exp()).collect();
    grad[target] -= S::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_cost_log_vocab() {
        let (loss, grad) = softmax_xent(&[0.25f64; 10], 3).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((grad[3] + 0.9).abs() < 1e-12);
        assert!((grad[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn saturated_target_costs_nothing() {
        let mut logits = vec![-1000.0f64; 5];
        logits[2] = 1000.0;
        let (loss, _) = softmax_xent(&logits, 2).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_three_logits() {
        let (loss, _) = softmax_xent(&[1.0f64, 2.0, 3.0], 0).unwrap();
        let expected = -1.0 + (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 2.407_605_964_444_38).abs() < 1e-12);
    }

    #[test]
    fn target_out_of_range() {
        assert!(softmax_xent(&[0.0f64; 3], 3).is_err());
    }

    #[test]
    fn sigmoid_of_log_three_is_three_quarters() {
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in prop::collection::vec(-1.0e4f64..1.0e4, 1..40)) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn xent_finite_for_large_logits(logits in prop::collection::vec(-1.0e4f64..1.0e4, 1..40), t in 0usize..40) {
            let target = t % logits.len();
            let (loss, grad) = softmax_xent(&logits, target).unwrap();
            prop_assert!(loss.is_finite() && loss >= 0.0);
            prop_assert!(grad.iter().all(|g| g.is_finite()));
        }
    }
}
