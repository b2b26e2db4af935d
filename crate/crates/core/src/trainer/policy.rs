use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PolicyGradientMode, TrainConfig};
use super::rollout::{PrefixState, RolloutContext};
use crate::corpus::{Sentence, TokenId, END};
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::generator::{Generator, NoiseVector};
use crate::math::rng::{stream, Rng};
use crate::math::{softmax, Direction, GradBuffer, Optimizer};

/// How `V(prefix + w)` is obtained for unfinished prefixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutMode {
    MonteCarlo(usize),
    Exhaustive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyDiagnostics {
    /// Mean evaluator score of the sampled sentences.
    pub mean_reward: f64,
    pub items: usize,
    pub rollouts: usize,
    pub valued_words: usize,
}

struct PathOptions {
    rollouts: RolloutMode,
    stride: usize,
    min_prob: f64,
    mode: PolicyGradientMode,
    baseline: f64,
}

impl RolloutContext<'_> {
    fn value_of<R: rand::Rng + ?Sized>(
        &self,
        after: &LstmStatePair,
        w: TokenId,
        body_len: usize,
        rollouts: RolloutMode,
        rng: &mut R,
        stats: &mut PolicyDiagnostics,
    ) -> Result<f64> {
        stats.valued_words += 1;
        if w == END {
            return self.finish(&after.evaluator);
        }
        let e = self.evaluator.feed(&after.evaluator, w)?;
        if body_len + 1 >= self.t_max {
            return self.finish(&e);
        }
        let prefix = PrefixState {
            generator: after.generator.clone(),
            last: w,
            body_len: body_len + 1,
            evaluator: e,
        };
        match rollouts {
            RolloutMode::MonteCarlo(n) => {
                stats.rollouts += n;
                Ok(self.monte_carlo(&prefix, n, rng)?.value)
            }
            RolloutMode::Exhaustive => self.exhaustive(&prefix),
        }
    }
}

/// Frozen generator state after consuming the current step's input, and
/// evaluator state after the body so far.
struct LstmStatePair {
    generator: crate::math::LstmState<f64>,
    evaluator: crate::math::LstmState<f64>,
}

fn path_gradient<R: rand::Rng + ?Sized>(
    generator: &Generator,
    ctx: &RolloutContext<'_>,
    feature: &[f64],
    z: &NoiseVector,
    sentence: &Sentence,
    opts: &PathOptions,
    rng: &mut R,
    weight: f64,
    grads: &mut GradBuffer<f64>,
    stats: &mut PolicyDiagnostics,
) -> Result<()> {
    let actions = if sentence.is_truncated() {
        sentence.body()
    } else {
        sentence.ids()
    };
    let path = generator.forward_path(feature, z, actions)?;
    let mut g_state = ctx.frozen.init_state(feature, z)?;
    let mut input = ctx.frozen.config().bos();
    let mut e_state = ctx.evaluator.start_sentence();
    let mut d_logits = Vec::with_capacity(actions.len());
    for (t, &taken) in actions.iter().enumerate() {
        let pi = softmax(&path.logits[t]);
        g_state = ctx.frozen.step_logits(&g_state, input)?.1;
        let after = LstmStatePair {
            generator: g_state.clone(),
            evaluator: e_state.clone(),
        };
        let mut d = vec![0.0; pi.len()];
        if t % opts.stride == 0 {
            match opts.mode {
                PolicyGradientMode::FullVocab => {
                    let mut values = vec![f64::NAN; pi.len()];
                    let mut mass = 0.0;
                    let mut mean = 0.0;
                    for (w, &p) in pi.iter().enumerate() {
                        if p < opts.min_prob {
                            continue;
                        }
                        let v = ctx.value_of(&after, w, t, opts.rollouts, rng, stats)?;
                        values[w] = v;
                        mass += p;
                        mean += p * v;
                    }
                    if mass > 0.0 {
                        mean /= mass;
                        for (w, &p) in pi.iter().enumerate() {
                            if !values[w].is_nan() {
                                d[w] = weight * p * (values[w] - mean);
                            }
                        }
                    }
                }
                PolicyGradientMode::Sampled => {
                    let v = ctx.value_of(&after, taken, t, opts.rollouts, rng, stats)? - opts.baseline;
                    for (w, &p) in pi.iter().enumerate() {
                        let onehot = if w == taken { 1.0 } else { 0.0 };
                        d[w] = weight * (onehot - p) * v;
                    }
                }
            }
        }
        d_logits.push(d);
        if taken != END {
            e_state = ctx.evaluator.feed(&e_state, taken)?;
        }
        input = taken;
    }
    generator.backward_path(&path, &d_logits, grads)
}

/// Policy-gradient contribution of one given sentence: at each step, the
/// gradient of `sum_w pi(w) V(prefix + w)` with `V` held fixed, scaled by
/// `weight` and added to `grads`. `V` comes from the frozen generator.
pub fn path_policy_gradient<R: rand::Rng + ?Sized>(
    generator: &Generator,
    frozen: &Generator,
    evaluator: &Evaluator,
    feature: &[f64],
    z: &NoiseVector,
    sentence: &Sentence,
    t_max: usize,
    rollouts: RolloutMode,
    rng: &mut R,
    weight: f64,
    grads: &mut GradBuffer<f64>,
) -> Result<()> {
    let ctx = RolloutContext {
        frozen,
        evaluator,
        image: evaluator.embed_image(feature)?,
        t_max,
    };
    let opts = PathOptions {
        rollouts,
        stride: 1,
        min_prob: 0.0,
        mode: PolicyGradientMode::FullVocab,
        baseline: 0.0,
    };
    path_gradient(generator, &ctx, feature, z, sentence, &opts, rng, weight, grads, &mut PolicyDiagnostics::default())
}

struct Draw {
    rng: Rng,
    z: NoiseVector,
    sentence: Sentence,
    reward: f64,
}

/// Mean policy gradient over `features` (ascent direction). Item `i` draws
/// its noise, sentence and rollouts from the stream `key + [i]`, so the
/// result does not depend on the thread count.
pub fn policy_gradient(
    generator: &Generator,
    frozen: &Generator,
    evaluator: &Evaluator,
    features: &[&[f64]],
    cfg: &TrainConfig,
    rollouts: RolloutMode,
    key: &[u64],
) -> Result<(GradBuffer<f64>, PolicyDiagnostics)> {
    if features.is_empty() {
        return Err(Error::Empty("policy-gradient batch"));
    }
    let dim = generator.config().noise_dim;
    let draws: Vec<Draw> = features
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut path = key.to_vec();
            path.push(i as u64);
            let mut rng = stream(cfg.seed, &path);
            let z = NoiseVector::sample(dim, cfg.noise_sigma, &mut rng);
            let sentence = generator.sample_sentence(f, &z, cfg.t_max, 1.0, &mut rng)?;
            let reward = evaluator.score(f, &sentence)?.score;
            Ok(Draw { rng, z, sentence, reward })
        })
        .collect::<Result<_>>()?;
    let mean_reward = draws.iter().map(|d| d.reward).sum::<f64>() / draws.len() as f64;
    let opts = PathOptions {
        rollouts,
        stride: cfg.rollout_stride,
        min_prob: cfg.rollout_min_prob,
        mode: cfg.pg_mode,
        baseline: if cfg.baseline { mean_reward } else { 0.0 },
    };
    let weight = 1.0 / features.len() as f64;
    let parts: Vec<(GradBuffer<f64>, PolicyDiagnostics)> = draws
        .into_par_iter()
        .zip(features.par_iter())
        .map(|(mut d, f)| {
            let ctx = RolloutContext {
                frozen,
                evaluator,
                image: evaluator.embed_image(f)?,
                t_max: cfg.t_max,
            };
            let mut grads = generator.params.zeroed_grads();
            let mut stats = PolicyDiagnostics::default();
            path_gradient(generator, &ctx, f, &d.z, &d.sentence, &opts, &mut d.rng, weight, &mut grads, &mut stats)?;
            Ok((grads, stats))
        })
        .collect::<Result<_>>()?;
    let mut total = generator.params.zeroed_grads();
    let mut stats = PolicyDiagnostics {
        mean_reward,
        items: features.len(),
        ..Default::default()
    };
    for (g, s) in parts {
        total.add_scaled(1.0, &g)?;
        stats.rollouts += s.rollouts;
        stats.valued_words += s.valued_words;
    }
    Ok((total, stats))
}

/// One ascent step on the policy-gradient estimate.
pub fn policy_gradient_step(
    generator: &mut Generator,
    optimizer: &mut Optimizer<f64>,
    frozen: &Generator,
    evaluator: &Evaluator,
    features: &[&[f64]],
    cfg: &TrainConfig,
    key: &[u64],
) -> Result<PolicyDiagnostics> {
    let (grads, stats) = policy_gradient(
        generator,
        frozen,
        evaluator,
        features,
        cfg,
        RolloutMode::MonteCarlo(cfg.rollout_count),
        key,
    )?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("policy gradient".into()));
    }
    optimizer.step(&mut generator.params, &grads, Direction::Ascend)?;
    Ok(stats)
}
