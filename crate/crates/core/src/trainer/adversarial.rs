use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::policy::policy_gradient_step;
use super::report::{TrainRecord, TrainReport};
use super::tags;
use crate::corpus::{sample_mismatched, EncodedRecord, Sentence};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, LossBreakdown};
use crate::generator::{Generator, NoiseVector};
use crate::math::rng::stream;
use crate::math::{Direction, GradBuffer, Optimizer};

/// Batch means of the evaluator objective and its score terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorDiagnostics {
    pub loss: f64,
    pub mean_ref: f64,
    pub mean_gen: f64,
    pub mean_mism: f64,
}

impl EvaluatorDiagnostics {
    fn accumulate(&mut self, l: &LossBreakdown, w: f64) {
        self.loss += w * l.loss;
        self.mean_ref += w * l.mean_ref;
        self.mean_gen += w * l.mean_gen;
        self.mean_mism += w * l.mean_mism;
    }
}

fn draw_batch(len: usize, size: usize, seed: u64, key: &[u64]) -> Vec<usize> {
    let mut rng = stream(seed, key);
    let mut picked = index::sample(&mut rng, len, size.min(len)).into_vec();
    picked.sort_unstable();
    picked
}

/// Mean gradient (ascent direction) of the three-term objective over the
/// records at `batch`. For each record: `refs_per_image` distinct
/// references, `gen_per_image` generator samples with fresh noise, and
/// `mism_per_image` references of other records. Position `k` of the batch
/// uses the stream `key + [k]`.
pub fn evaluator_gradient(
    evaluator: &Evaluator,
    generator: &Generator,
    records: &[EncodedRecord],
    batch: &[usize],
    cfg: &TrainConfig,
    key: &[u64],
) -> Result<(GradBuffer<f64>, EvaluatorDiagnostics)> {
    if batch.is_empty() {
        return Err(Error::Empty("evaluator batch"));
    }
    let dim = generator.config().noise_dim;
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<(GradBuffer<f64>, LossBreakdown)> = batch
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let mut path = key.to_vec();
            path.push(k as u64);
            let mut rng = stream(cfg.seed, &path);
            let record = &records[i];
            let take = cfg.refs_per_image.min(record.refs.len());
            let mut picks = index::sample(&mut rng, record.refs.len(), take).into_vec();
            picks.sort_unstable();
            let refs: Vec<&Sentence> = picks.iter().map(|&j| &record.refs[j]).collect();
            let gen: Vec<Sentence> = (0..cfg.gen_per_image)
                .map(|_| {
                    let z = NoiseVector::sample(dim, cfg.noise_sigma, &mut rng);
                    generator.sample_sentence(&record.feature, &z, cfg.t_max, cfg.temperature, &mut rng)
                })
                .collect::<Result<_>>()?;
            let mism: Vec<&Sentence> = (0..cfg.mism_per_image)
                .map(|_| sample_mismatched(records, i, &mut rng))
                .collect::<Result<_>>()?;
            let gen_refs: Vec<&Sentence> = gen.iter().collect();
            let mut grads = evaluator.params.zeroed_grads();
            let l = evaluator.loss(
                &record.feature,
                &refs,
                &gen_refs,
                &mism,
                cfg.alpha,
                cfg.beta,
                weight,
                Some(&mut grads),
            )?;
            Ok((grads, l))
        })
        .collect::<Result<_>>()?;
    let mut total = evaluator.params.zeroed_grads();
    let mut diag = EvaluatorDiagnostics::default();
    for (g, l) in &parts {
        total.add_scaled(1.0, g)?;
        diag.accumulate(l, weight);
    }
    Ok((total, diag))
}

/// One ascent step of the evaluator on `batch`.
pub fn evaluator_step(
    evaluator: &mut Evaluator,
    optimizer: &mut Optimizer<f64>,
    generator: &Generator,
    records: &[EncodedRecord],
    batch: &[usize],
    cfg: &TrainConfig,
    key: &[u64],
) -> Result<EvaluatorDiagnostics> {
    let (grads, diag) = evaluator_gradient(evaluator, generator, records, batch, cfg, key)?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("evaluator gradient".into()));
    }
    optimizer.step(&mut evaluator.params, &grads, Direction::Ascend)?;
    Ok(diag)
}

fn record_scores(rec: &mut TrainRecord, diags: &[EvaluatorDiagnostics]) {
    if diags.is_empty() {
        return;
    }
    let n = diags.len() as f64;
    rec.e_loss = Some(diags.iter().map(|d| d.loss).sum::<f64>() / n);
    rec.score_ref = Some(diags.iter().map(|d| d.mean_ref).sum::<f64>() / n);
    rec.score_gen = Some(diags.iter().map(|d| d.mean_gen).sum::<f64>() / n);
    rec.score_mism = Some(diags.iter().map(|d| d.mean_mism).sum::<f64>() / n);
}

/// Epochs of evaluator updates against a fixed generator.
pub fn pretrain_evaluator(
    evaluator: &mut Evaluator,
    generator: &Generator,
    train: &[EncodedRecord],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::Empty("training corpus"));
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.evaluator_lr());
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.pretrain_epochs_e {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, &[tags::E_PRETRAIN, epoch as u64]));
        let mut diags = Vec::new();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let key = [tags::E_PRETRAIN, epoch as u64, 1, b as u64];
            diags.push(evaluator_step(evaluator, &mut optimizer, generator, train, batch, cfg, &key)?);
        }
        let mut rec = TrainRecord::new("evaluator", epoch, cfg.seed);
        record_scores(&mut rec, &diags);
        report.push(rec);
    }
    Ok(report)
}

/// Alternating updates: per iteration, snapshot the generator, run
/// `g_steps_per_iter` policy-gradient steps against the snapshot's rollouts,
/// then `e_steps_per_iter` evaluator steps against the current generator.
/// `on_iteration` runs after each iteration.
pub fn train_adversarial(
    generator: &mut Generator,
    evaluator: &mut Evaluator,
    train: &[EncodedRecord],
    cfg: &TrainConfig,
    on_iteration: &mut dyn FnMut(usize, &Generator, &Evaluator) -> Result<()>,
) -> Result<TrainReport> {
    train_alternating(generator, evaluator, train, cfg, "adversarial", on_iteration)
}

fn train_alternating(
    generator: &mut Generator,
    evaluator: &mut Evaluator,
    train: &[EncodedRecord],
    cfg: &TrainConfig,
    phase: &str,
    on_iteration: &mut dyn FnMut(usize, &Generator, &Evaluator) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport::default();
    if cfg.adversarial_iters == 0 {
        return Ok(report);
    }
    if train.len() < 2 {
        return Err(Error::Empty("training corpus"));
    }
    let mut g_opt = Optimizer::new(cfg.optimizer, cfg.pg_lr());
    let mut e_opt = Optimizer::new(cfg.optimizer, cfg.evaluator_lr());
    for iter in 1..=cfg.adversarial_iters {
        let it = iter as u64;
        let frozen = generator.snapshot();
        let mut rewards = Vec::new();
        for gs in 0..cfg.g_steps_per_iter as u64 {
            let batch = draw_batch(train.len(), cfg.pg_batch(), cfg.seed, &[tags::ADV_G, it, gs]);
            let features: Vec<&[f64]> = batch.iter().map(|&i| train[i].feature.as_slice()).collect();
            let key = [tags::ADV_G, it, gs, 1];
            let d = policy_gradient_step(generator, &mut g_opt, &frozen, evaluator, &features, cfg, &key)?;
            rewards.push(d.mean_reward);
        }
        let mut diags = Vec::new();
        for es in 0..cfg.e_steps_per_iter as u64 {
            let batch = draw_batch(train.len(), cfg.batch_size, cfg.seed, &[tags::ADV_E, it, es]);
            let key = [tags::ADV_E, it, es, 1];
            diags.push(evaluator_step(evaluator, &mut e_opt, generator, train, &batch, cfg, &key)?);
        }
        let mut rec = TrainRecord::new(phase, iter, cfg.seed);
        if !rewards.is_empty() {
            rec.g_reward = Some(rewards.iter().sum::<f64>() / rewards.len() as f64);
        }
        record_scores(&mut rec, &diags);
        report.push(rec);
        on_iteration(iter, generator, evaluator)?;
    }
    Ok(report)
}

/// The alternating loop with the generator held fixed.
pub fn train_e_ngan(
    evaluator: &mut Evaluator,
    generator: &Generator,
    train: &[EncodedRecord],
    cfg: &TrainConfig,
    on_iteration: &mut dyn FnMut(usize, &Generator, &Evaluator) -> Result<()>,
) -> Result<TrainReport> {
    let cfg = TrainConfig {
        g_steps_per_iter: 0,
        ..cfg.clone()
    };
    let mut fixed = generator.clone();
    train_alternating(&mut fixed, evaluator, train, &cfg, "e-ngan", on_iteration)
}
