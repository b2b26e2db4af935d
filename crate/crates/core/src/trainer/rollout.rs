use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, END};
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::generator::{Generator, NoiseVector};
use crate::math::{softmax, LstmState};

/// Estimate of `E[r(I, prefix + continuation)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEstimate {
    pub value: f64,
    pub samples: usize,
    pub std_dev: f64,
}

impl RewardEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            samples: 0,
            std_dev: 0.0,
        }
    }
}

/// Frozen generator and evaluator with the image already embedded.
pub(crate) struct RolloutContext<'a> {
    pub frozen: &'a Generator,
    pub evaluator: &'a Evaluator,
    pub image: Vec<f64>,
    pub t_max: usize,
}

/// Where a prefix stands: the generator state has consumed everything but
/// `last`, the evaluator state has read the whole body so far.
pub(crate) struct PrefixState {
    pub generator: LstmState<f64>,
    pub last: TokenId,
    pub body_len: usize,
    pub evaluator: LstmState<f64>,
}

impl RolloutContext<'_> {
    /// Score of a body whose evaluator state is `state`, once END is read.
    pub fn finish(&self, state: &LstmState<f64>) -> Result<f64> {
        let closed = self.evaluator.feed(state, END)?;
        Ok(Evaluator::score_embeddings(&self.image, &self.evaluator.finish_sentence(&closed)))
    }

    /// Monte-Carlo value of an unfinished prefix.
    pub fn monte_carlo<R: Rng + ?Sized>(&self, prefix: &PrefixState, n: usize, rng: &mut R) -> Result<RewardEstimate> {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        let mut cont = Vec::with_capacity(self.t_max + 1);
        for k in 0..n {
            cont.clear();
            self.frozen.sample_continuation(
                prefix.generator.clone(),
                prefix.last,
                prefix.body_len,
                self.t_max,
                1.0,
                rng,
                &mut cont,
            )?;
            let mut e = prefix.evaluator.clone();
            for &w in cont.iter().filter(|&&w| w != END) {
                e = self.evaluator.feed(&e, w)?;
            }
            let r = self.finish(&e)?;
            let delta = r - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (r - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Ok(RewardEstimate {
            value: mean,
            samples: n,
            std_dev: var.sqrt(),
        })
    }

    /// Exact value of an unfinished prefix by enumerating continuations.
    pub fn exhaustive(&self, prefix: &PrefixState) -> Result<f64> {
        let (logits, next) = self.frozen.step_logits(&prefix.generator, prefix.last)?;
        let dist = softmax(&logits);
        let mut total = 0.0;
        for (w, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let v = if w == END {
                self.finish(&prefix.evaluator)?
            } else {
                let e = self.evaluator.feed(&prefix.evaluator, w)?;
                if prefix.body_len + 1 >= self.t_max {
                    self.finish(&e)?
                } else {
                    self.exhaustive(&PrefixState {
                        generator: next.clone(),
                        last: w,
                        body_len: prefix.body_len + 1,
                        evaluator: e,
                    })?
                }
            };
            total += p * v;
        }
        Ok(total)
    }
}

enum Prepared {
    Complete(f64),
    Open(PrefixState),
}

fn prepare<'a>(
    feature: &[f64],
    z: &NoiseVector,
    prefix: &[TokenId],
    frozen: &'a Generator,
    evaluator: &'a Evaluator,
    t_max: usize,
) -> Result<(RolloutContext<'a>, Prepared)> {
    if let Some(pos) = prefix.iter().position(|&w| w == END) {
        if pos + 1 != prefix.len() {
            return Err(Error::Invariant("prefix contains END before its last token".into()));
        }
    }
    let ctx = RolloutContext {
        frozen,
        evaluator,
        image: evaluator.embed_image(feature)?,
        t_max,
    };
    let complete = prefix.last() == Some(&END);
    let body = if complete { &prefix[..prefix.len() - 1] } else { prefix };
    let mut e = evaluator.start_sentence();
    for &w in body {
        e = evaluator.feed(&e, w)?;
    }
    if complete || body.len() >= t_max {
        let r = ctx.finish(&e)?;
        return Ok((ctx, Prepared::Complete(r)));
    }
    let mut g = frozen.init_state(feature, z)?;
    let mut last = frozen.config().bos();
    for &w in body {
        g = frozen.step_logits(&g, last)?.1;
        last = w;
    }
    let state = PrefixState {
        generator: g,
        last,
        body_len: body.len(),
        evaluator: e,
    };
    Ok((ctx, Prepared::Open(state)))
}

/// `V(I, z, prefix)`: the evaluator score of a complete prefix (ending in
/// END, or at `t_max`), otherwise the mean score over `n` continuations
/// sampled from the frozen policy.
pub fn expected_future_reward<R: Rng + ?Sized>(
    feature: &[f64],
    z: &NoiseVector,
    prefix: &[TokenId],
    frozen: &Generator,
    evaluator: &Evaluator,
    n: usize,
    t_max: usize,
    rng: &mut R,
) -> Result<RewardEstimate> {
    if n < 1 {
        return Err(Error::Config("rollout count must be at least 1".into()));
    }
    match prepare(feature, z, prefix, frozen, evaluator, t_max)? {
        (_, Prepared::Complete(r)) => Ok(RewardEstimate::exact(r)),
        (ctx, Prepared::Open(state)) => ctx.monte_carlo(&state, n, rng),
    }
}

/// `V(I, z, prefix)` computed exactly by enumerating every continuation.
pub fn exact_future_reward(
    feature: &[f64],
    z: &NoiseVector,
    prefix: &[TokenId],
    frozen: &Generator,
    evaluator: &Evaluator,
    t_max: usize,
) -> Result<f64> {
    match prepare(feature, z, prefix, frozen, evaluator, t_max)? {
        (_, Prepared::Complete(r)) => Ok(r),
        (ctx, Prepared::Open(state)) => ctx.exhaustive(&state),
    }
}
