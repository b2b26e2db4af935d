use std::cmp::Ordering;

use rand::Rng;

use super::network::{Generator, NoiseVector};
use crate::corpus::{Sentence, TokenId, END};
use crate::error::{Error, Result};
use crate::math::{log_softmax, LstmState};

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Ranks completed beam candidates. Higher is better.
pub trait BeamScorer {
    fn score(&self, sentence: &Sentence, log_prob: f64) -> Result<f64>;
}

impl<F> BeamScorer for F
where
    F: Fn(&Sentence, f64) -> Result<f64>,
{
    fn score(&self, sentence: &Sentence, log_prob: f64) -> Result<f64> {
        self(sentence, log_prob)
    }
}

struct Hypothesis {
    log_prob: f64,
    body: Vec<TokenId>,
    state: LstmState<f64>,
}

struct Expansion {
    log_prob: f64,
    parent: usize,
    word: TokenId,
}

fn by_prob_then_tokens(a_lp: f64, a: &[TokenId], b_lp: f64, b: &[TokenId]) -> Ordering {
    b_lp.partial_cmp(&a_lp).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
}

/// Beam search over the policy. At each step every live hypothesis is
/// expanded by every word, the `width` most probable expansions survive,
/// and those ending in END (or hitting `t_max`) become candidates. The
/// candidate with the highest `scorer` value is returned; ties fall back to
/// log-probability and then token order. Width 1 reproduces greedy decoding.
pub fn beam_search<S: BeamScorer + ?Sized>(
    generator: &Generator,
    feature: &[f64],
    z: &NoiseVector,
    width: usize,
    t_max: usize,
    scorer: &S,
) -> Result<Sentence> {
    if width == 0 || t_max == 0 {
        return Err(Error::Config("beam width and t_max must be positive".into()));
    }
    let bos = generator.config().bos();
    let mut live = vec![Hypothesis {
        log_prob: 0.0,
        body: Vec::new(),
        state: generator.init_state(feature, z)?,
    }];
    let mut done: Vec<(f64, Sentence)> = Vec::new();
    while !live.is_empty() {
        let mut expansions = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (k, hyp) in live.iter().enumerate() {
            let last = hyp.body.last().copied().unwrap_or(bos);
            let (logits, next) = generator.step_logits(&hyp.state, last)?;
            for (w, lp) in log_softmax(&logits).into_iter().enumerate() {
                expansions.push(Expansion {
                    log_prob: hyp.log_prob + lp,
                    parent: k,
                    word: w,
                });
            }
            next_states.push(next);
        }
        let key = |e: &Expansion| {
            let mut t = live[e.parent].body.clone();
            t.push(e.word);
            t
        };
        expansions.sort_by(|a, b| by_prob_then_tokens(a.log_prob, &key(a), b.log_prob, &key(b)));
        expansions.truncate(width);
        let mut survivors = Vec::new();
        for e in expansions {
            let parent = &live[e.parent];
            if e.word == END {
                done.push((e.log_prob, Sentence::from_body(parent.body.clone(), false)));
                continue;
            }
            let mut body = parent.body.clone();
            body.push(e.word);
            if body.len() >= t_max {
                done.push((e.log_prob, Sentence::from_body(body, true)));
            } else {
                survivors.push(Hypothesis {
                    log_prob: e.log_prob,
                    body,
                    state: next_states[e.parent].clone(),
                });
            }
        }
        live = survivors;
    }
    let mut best: Option<(f64, f64, Sentence)> = None;
    for (lp, s) in done {
        let score = scorer.score(&s, lp)?;
        let better = match &best {
            None => true,
            Some((bs, blp, bsent)) => {
                score > *bs || (score == *bs && (lp > *blp || (lp == *blp && s.ids() < bsent.ids())))
            }
        };
        if better {
            best = Some((score, lp, s));
        }
    }
    best.map(|(_, _, s)| s)
        .ok_or_else(|| Error::Invariant("beam search produced no candidates".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GeneratorConfig;
    use crate::math::rng::seeded;
    use crate::math::{Matrix, ParamId};

    fn tiny(vocab_ext: usize, seed: u64, scale: f64) -> Generator {
        let cfg = GeneratorConfig {
            vocab_ext,
            feature_dim: 2,
            noise_dim: 2,
            embed_dim: 3,
            hidden_dim: 4,
        };
        let mut g = Generator::zeros(&cfg).unwrap();
        let mut rng = seeded(seed);
        for i in 0..g.params.len() {
            let (r, c) = g.params.value(ParamId(i)).shape();
            *g.params.value_mut(ParamId(i)) = Matrix::random_uniform(r, c, scale, &mut rng);
        }
        g
    }

    /// Every sentence the sampler can emit, with its probability.
    fn enumerate(g: &Generator, f: &[f64], z: &NoiseVector, t_max: usize) -> Vec<(Sentence, f64)> {
        fn walk(
            g: &Generator,
            state: &LstmState<f64>,
            last: TokenId,
            body: &mut Vec<TokenId>,
            p: f64,
            t_max: usize,
            out: &mut Vec<(Sentence, f64)>,
        ) {
            let (dist, next) = g.step_policy(state, last).unwrap();
            for (w, q) in dist.into_iter().enumerate() {
                if w == END {
                    out.push((Sentence::from_body(body.clone(), false), p * q));
                } else {
                    body.push(w);
                    if body.len() == t_max {
                        out.push((Sentence::from_body(body.clone(), true), p * q));
                    } else {
                        walk(g, &next, w, body, p * q, t_max, out);
                    }
                    body.pop();
                }
            }
        }
        let mut out = Vec::new();
        let s0 = g.init_state(f, z).unwrap();
        walk(g, &s0, g.config().bos(), &mut Vec::new(), 1.0, t_max, &mut out);
        out
    }

    #[test]
    fn sample_index_respects_zero_mass() {
        let mut rng = seeded(1);
        for _ in 0..1000 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }

    #[test]
    fn sampling_frequencies_match_enumeration() {
        let g = tiny(3, 11, 1.0);
        let f = [0.3, -0.4];
        let z = NoiseVector(vec![0.5, 0.1]);
        let table = enumerate(&g, &f, &z, 2);
        assert!((table.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        let n = 100_000;
        let mut counts = vec![0usize; table.len()];
        let mut rng = seeded(5);
        for _ in 0..n {
            let s = g.sample_sentence(&f, &z, 2, 1.0, &mut rng).unwrap();
            let k = table.iter().position(|(t, _)| *t == s).expect("sampled unknown sentence");
            counts[k] += 1;
        }
        let chi2: f64 = table
            .iter()
            .zip(&counts)
            .map(|((_, p), &c)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 99.9% quantile of chi-square with 6 degrees of freedom.
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = seeded(3);
        for seed in 0..10 {
            let g = tiny(5, seed, 1.5);
            let z = NoiseVector::sample(2, 1.0, &mut rng);
            let f = [0.1 * seed as f64, 0.7];
            let loglik = |_: &Sentence, lp: f64| Ok(lp);
            let b = beam_search(&g, &f, &z, 1, 6, &loglik).unwrap();
            assert_eq!(b, g.greedy(&f, &z, 6).unwrap());
        }
    }

    #[test]
    fn wide_beam_finds_most_probable_sentence() {
        let mut rng = seeded(4);
        for seed in 0..10 {
            let g = tiny(3, 100 + seed, 2.0);
            let z = NoiseVector::sample(2, 1.0, &mut rng);
            let f = [0.5, -0.2];
            let table = enumerate(&g, &f, &z, 2);
            let best = table
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            let loglik = |_: &Sentence, lp: f64| Ok(lp);
            let found = beam_search(&g, &f, &z, 8, 2, &loglik).unwrap();
            assert_eq!(found, best.0);
            let lp = g.log_likelihood(&f, &z, &found).unwrap();
            assert!((lp.exp() - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn scorer_chooses_among_candidates() {
        let g = tiny(4, 9, 1.0);
        let z = NoiseVector::zeros(2);
        let shortest = |s: &Sentence, _: f64| Ok(-(s.len() as f64));
        let s = beam_search(&g, &[0.0, 0.0], &z, 64, 3, &shortest).unwrap();
        assert_eq!(s.ids(), &[END]);
    }
}
