use captiongan::corpus::{Sentence, TokenId, END};
use captiongan::evaluator::{Evaluator, EvaluatorConfig};
use captiongan::generator::{Generator, GeneratorConfig, NoiseVector};
use captiongan::math::rng::seeded;
use captiongan::trainer::{path_policy_gradient, RolloutMode};

pub fn tiny_generator(vocab_ext: usize, noise_dim: usize, seed: u64, scale: f64) -> Generator {
    let cfg = GeneratorConfig {
        vocab_ext,
        feature_dim: 3,
        noise_dim,
        embed_dim: 3,
        hidden_dim: 4,
    };
    let mut g = Generator::zeros(&cfg).unwrap();
    g.fill_uniform(scale, seed);
    g
}

pub fn tiny_evaluator(vocab_ext: usize, seed: u64, scale: f64) -> Evaluator {
    let cfg = EvaluatorConfig {
        vocab_ext,
        feature_dim: 3,
        embed_dim: 3,
        hidden_dim: 4,
        joint_dim: 3,
    };
    let mut e = Evaluator::zeros(&cfg).unwrap();
    e.fill_uniform(scale, seed);
    e
}

/// Every sentence the policy can emit, with its probability.
pub fn enumerate(g: &Generator, f: &[f64], z: &NoiseVector, t_max: usize) -> Vec<(Sentence, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![(g.init_state(f, z).unwrap(), g.config().bos(), Vec::<TokenId>::new(), 1.0)];
    while let Some((state, last, body, p)) = stack.pop() {
        let (dist, next) = g.step_policy(&state, last).unwrap();
        for (w, q) in dist.into_iter().enumerate() {
            if w == END {
                out.push((Sentence::from_body(body.clone(), false), p * q));
            } else {
                let mut b = body.clone();
                b.push(w);
                if b.len() == t_max {
                    out.push((Sentence::from_body(b, true), p * q));
                } else {
                    stack.push((next.clone(), w, b, p * q));
                }
            }
        }
    }
    out
}

/// Sum over completions of `prefix` of P(completion) * r, by enumeration
/// from the start of the sentence.
pub fn enumerated_value(g: &Generator, e: &Evaluator, f: &[f64], z: &NoiseVector, prefix: &[TokenId], t_max: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, p) in enumerate(g, f, z, t_max) {
        if s.ids().starts_with(prefix) {
            num += p * e.score(f, &s).unwrap().score;
            den += p;
        }
    }
    num / den
}

/// Gradient of the exact expected reward implied by the estimator: the
/// sum over sampled sentences of P(S) times the per-path estimate.
pub fn estimator_expectation(g: &Generator, e: &Evaluator, f: &[f64], z: &NoiseVector, t_max: usize) -> Generator {
    let mut grads = g.params.zeroed_grads();
    for (s, p) in enumerate(g, f, z, t_max) {
        path_policy_gradient(g, g, e, f, z, &s, t_max, RolloutMode::Exhaustive, &mut seeded(0), p, &mut grads).unwrap();
    }
    let mut out = g.clone();
    out.params.set_grads(grads).unwrap();
    out
}
