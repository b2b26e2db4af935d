//! Finite-difference suite over the three differentiable objectives:
//! generator sentence NLL, evaluator score, and the evaluator's three-term
//! loss. Used by the `grad-check` command.
//!
//! The objective inside the difference quotient is evaluated in quad
//! precision by [`reference`], so the quotient keeps about 20 significant
//! digits at `eps = 1e-5` even for gradient entries near 1e-9.

pub mod reference;

use f128::f128;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TokenId};
use crate::error::Result;
use crate::evaluator::{Evaluator, EvaluatorConfig};
use crate::generator::{Generator, GeneratorConfig, NoiseVector};
use crate::math::gradcheck::grad_check_with;
use crate::math::rng::stream;

pub const GRAD_CHECK_EPS: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

const TAG: u64 = 0x67c;
const VOCAB_EXT: usize = 7;
const FEATURE_DIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSuiteConfig {
    pub instances: usize,
    pub hidden_dim: usize,
    /// Parameters are drawn uniformly in `[-scale, scale]`.
    pub scale: f64,
    pub eps: f64,
}

impl Default for GradSuiteConfig {
    fn default() -> Self {
        Self {
            instances: 1,
            hidden_dim: 8,
            scale: 1.0,
            eps: GRAD_CHECK_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub objective: String,
    pub instance: usize,
    pub max_relative_error: f64,
    pub worst: Option<String>,
    pub analytic: Option<f64>,
    pub numeric: Option<f64>,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSuiteReport {
    pub seed: u64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
    pub max_relative_error: f64,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

pub fn generator_config(hidden_dim: usize) -> GeneratorConfig {
    GeneratorConfig {
        vocab_ext: VOCAB_EXT,
        feature_dim: FEATURE_DIM,
        noise_dim: 3,
        embed_dim: 4,
        hidden_dim,
    }
}

pub fn evaluator_config(hidden_dim: usize) -> EvaluatorConfig {
    EvaluatorConfig {
        vocab_ext: VOCAB_EXT,
        feature_dim: FEATURE_DIM,
        embed_dim: 4,
        hidden_dim,
        joint_dim: 6,
    }
}

fn random_sentence<R: Rng>(rng: &mut R) -> Sentence {
    let len = rng.random_range(1..=5);
    let body: Vec<TokenId> = (0..len).map(|_| rng.random_range(1..VOCAB_EXT)).collect();
    Sentence::from_body(body, false)
}

fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn entry(objective: &str, instance: usize, r: crate::math::GradCheckReport<f64>) -> GradCheckEntry {
    GradCheckEntry {
        objective: objective.to_string(),
        instance,
        max_relative_error: r.max_relative_error,
        worst: r.worst.map(|(name, k)| format!("{name}[{k}]")),
        analytic: r.worst_values.map(|v| v.0),
        numeric: r.worst_values.map(|v| v.1),
        checked: r.checked,
    }
}

fn check_generator(seed: u64, k: usize, c: &GradSuiteConfig) -> Result<GradCheckEntry> {
    let mut rng = stream(seed, &[TAG, 0, k as u64]);
    let cfg = generator_config(c.hidden_dim);
    let mut g = Generator::zeros(&cfg)?;
    g.fill_uniform(c.scale, rng.random());
    let f = random_vec(&mut rng, FEATURE_DIM);
    let z = NoiseVector(random_vec(&mut rng, cfg.noise_dim));
    let s = random_sentence(&mut rng);
    let mut grads = g.params.zeroed_grads();
    g.nll_backward(&f, &z, &s, 1.0, &mut grads)?;
    g.params.set_grads(grads)?;
    let report = grad_check_with(&g.params, c.eps, |p| {
        reference::generator_nll::<f128>(p, &f, &z.0, &s).unwrap_or(f128::NAN)
    })?;
    Ok(entry("generator-nll", k, report))
}

fn check_score(seed: u64, k: usize, c: &GradSuiteConfig) -> Result<GradCheckEntry> {
    let mut rng = stream(seed, &[TAG, 1, k as u64]);
    let cfg = evaluator_config(c.hidden_dim);
    let mut e = Evaluator::zeros(&cfg)?;
    e.fill_uniform(c.scale, rng.random());
    let f = random_vec(&mut rng, FEATURE_DIM);
    let s = random_sentence(&mut rng);
    let r = e.score(&f, &s)?.score;
    // d r = r d ln r, and the loss with alpha = beta = 0 is ln r.
    let mut grads = e.params.zeroed_grads();
    e.loss(&f, &[&s], &[&s], &[&s], 0.0, 0.0, r, Some(&mut grads))?;
    e.params.set_grads(grads)?;
    let report = grad_check_with(&e.params, c.eps, |p| {
        reference::evaluator_score::<f128>(p, &f, &s).unwrap_or(f128::NAN)
    })?;
    Ok(entry("evaluator-score", k, report))
}

fn check_loss(seed: u64, k: usize, c: &GradSuiteConfig) -> Result<GradCheckEntry> {
    let mut rng = stream(seed, &[TAG, 2, k as u64]);
    let cfg = evaluator_config(c.hidden_dim);
    let mut e = Evaluator::zeros(&cfg)?;
    e.fill_uniform(c.scale, rng.random());
    let f = random_vec(&mut rng, FEATURE_DIM);
    let sets: Vec<Vec<Sentence>> = (0..3).map(|_| (0..2).map(|_| random_sentence(&mut rng)).collect()).collect();
    let view = |i: usize| -> Vec<&Sentence> { sets[i].iter().collect() };
    let (refs, gen, mism) = (view(0), view(1), view(2));
    let (alpha, beta) = (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0));
    let mut grads = e.params.zeroed_grads();
    e.loss(&f, &refs, &gen, &mism, alpha, beta, 1.0, Some(&mut grads))?;
    e.params.set_grads(grads)?;
    let report = grad_check_with(&e.params, c.eps, |p| {
        reference::evaluator_loss::<f128>(p, &f, [&refs, &gen, &mism], alpha, beta).unwrap_or(f128::NAN)
    })?;
    Ok(entry("evaluator-loss", k, report))
}

/// Runs every objective on `config.instances` random instances derived
/// from `seed`.
pub fn gradient_suite(seed: u64, config: &GradSuiteConfig) -> Result<GradSuiteReport> {
    let mut entries = Vec::with_capacity(3 * config.instances);
    for k in 0..config.instances {
        entries.push(check_generator(seed, k, config)?);
        entries.push(check_score(seed, k, config)?);
        entries.push(check_loss(seed, k, config)?);
    }
    let max_relative_error = entries.iter().map(|e| e.max_relative_error).fold(0.0, f64::max);
    Ok(GradSuiteReport {
        seed,
        tolerance: GRAD_CHECK_TOLERANCE,
        entries,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_library_forward() {
        let mut rng = stream(5, &[1]);
        for hidden in [3, 8] {
            let mut g = Generator::zeros(&generator_config(hidden)).unwrap();
            g.fill_uniform(0.8, rng.random());
            let mut e = Evaluator::zeros(&evaluator_config(hidden)).unwrap();
            e.fill_uniform(0.8, rng.random());
            let f = random_vec(&mut rng, FEATURE_DIM);
            let z = NoiseVector(random_vec(&mut rng, 3));
            let (a, b) = (random_sentence(&mut rng), random_sentence(&mut rng));
            let cut = Sentence::from_body(vec![2, 3], true);
            for s in [&a, &b, &cut] {
                let lib = g.nll(&f, &z, s).unwrap().0;
                assert!((reference::generator_nll::<f64>(&g.params, &f, &z.0, s).unwrap() - lib).abs() < 1e-12);
            }
            let lib = e.score(&f, &a).unwrap().score;
            assert!((reference::evaluator_score::<f64>(&e.params, &f, &a).unwrap() - lib).abs() < 1e-14);
            let lib = e.loss(&f, &[&a], &[&b, &a], &[&b], 0.3, 0.9, 1.0, None).unwrap().loss;
            let sets: [&[&Sentence]; 3] = [&[&a], &[&b, &a], &[&b]];
            assert!((reference::evaluator_loss::<f64>(&e.params, &f, sets, 0.3, 0.9).unwrap() - lib).abs() < 1e-12);
        }
    }

    #[test]
    fn quad_objective_agrees_with_double() {
        let mut e = Evaluator::zeros(&evaluator_config(4)).unwrap();
        e.fill_uniform(1.0, 9);
        let s = Sentence::from_body(vec![1, 5, 2], false);
        let f = [0.1, -0.4, 0.9, 0.0, 0.3];
        let wide = reference::evaluator_score::<f128>(&e.params, &f, &s).unwrap();
        let narrow = reference::evaluator_score::<f64>(&e.params, &f, &s).unwrap();
        assert!((num_traits::ToPrimitive::to_f64(&wide).unwrap() - narrow).abs() < 1e-15);
    }

    #[test]
    fn quad_comparisons_order_negative_values() {
        let (a, b) = (f128::from(-0.3f64), f128::from(-5.0f64));
        assert!(a > b && b > <f128 as num_traits::Float>::neg_infinity());
        let logits = [-0.3f64, -2.0, -0.1];
        let s = Sentence::from_body(vec![], false);
        let mut g = Generator::zeros(&generator_config(2)).unwrap();
        g.tensor_mut("out.bias").unwrap().as_mut_slice()[..3].copy_from_slice(&logits);
        let wide = reference::generator_nll::<f128>(&g.params, &[0.0; 5], &[0.0; 3], &s).unwrap();
        let narrow = g.nll(&[0.0; 5], &NoiseVector::zeros(3), &s).unwrap().0;
        assert!((num_traits::ToPrimitive::to_f64(&wide).unwrap() - narrow).abs() < 1e-14);
    }

    #[test]
    fn suite_reports_every_objective() {
        let cfg = GradSuiteConfig {
            instances: 2,
            hidden_dim: 3,
            ..GradSuiteConfig::default()
        };
        let r = gradient_suite(1, &cfg).unwrap();
        assert_eq!(r.entries.len(), 6);
        assert!(r.entries.iter().all(|e| e.checked > 0));
        assert!(r.passed(), "{r:?}");
    }
}
