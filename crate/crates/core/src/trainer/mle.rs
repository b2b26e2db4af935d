use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::report::{TrainRecord, TrainReport};
use super::tags;
use crate::corpus::EncodedRecord;
use crate::error::{Error, Result};
use crate::generator::{Generator, NoiseVector};
use crate::math::rng::stream;
use crate::math::{Direction, GradBuffer, Optimizer};

/// Per-token teacher-forced NLL over every reference of `records`. Noise
/// for sentence `k` comes from a fixed stream so repeated calls agree.
pub fn validation_nll(generator: &Generator, records: &[EncodedRecord], cfg: &TrainConfig) -> Result<f64> {
    let dim = generator.config().noise_dim;
    let items: Vec<(usize, usize)> = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..r.refs.len()).map(move |j| (i, j)))
        .collect();
    if items.is_empty() {
        return Err(Error::Empty("validation corpus"));
    }
    let parts: Vec<(f64, usize)> = items
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let mut rng = stream(cfg.seed, &[tags::VAL_NOISE, k as u64]);
            let z = NoiseVector::sample(dim, cfg.noise_sigma, &mut rng);
            generator.nll(&records[i].feature, &z, &records[i].refs[j])
        })
        .collect::<Result<_>>()?;
    let (loss, tokens) = parts.iter().fold((0.0, 0), |(l, t), &(a, b)| (l + a, t + b));
    Ok(loss / tokens as f64)
}

/// Mini-batch MLE over every (record, reference) pair with fresh noise per
/// example per epoch. The batch loss is the summed sentence NLL averaged
/// over the batch. The report
/// holds an epoch-0 record (before any update) and one per epoch.
pub fn pretrain_mle(
    generator: &mut Generator,
    train: &[EncodedRecord],
    val: &[EncodedRecord],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut pairs: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..r.refs.len()).map(move |j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut report = TrainReport::default();
    let mut first = TrainRecord::new("mle", 0, cfg.seed);
    if !val.is_empty() {
        first.val_nll = Some(validation_nll(generator, val, cfg)?);
    }
    report.push(first);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.mle_lr());
    let dim = generator.config().noise_dim;
    for epoch in 1..=cfg.pretrain_epochs_g {
        pairs.sort_unstable();
        pairs.shuffle(&mut stream(cfg.seed, &[tags::MLE_SHUFFLE, epoch as u64]));
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for (b, batch) in pairs.chunks(cfg.batch_size).enumerate() {
            let gen = &*generator;
            let parts: Vec<(GradBuffer<f64>, f64, usize)> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &(i, j))| {
                    let pos = (b * cfg.batch_size + k) as u64;
                    let mut rng = stream(cfg.seed, &[tags::MLE_NOISE, epoch as u64, pos]);
                    let z = NoiseVector::sample(dim, cfg.noise_sigma, &mut rng);
                    let mut g = gen.params.zeroed_grads();
                    let (loss, n) = gen.nll_backward(&train[i].feature, &z, &train[i].refs[j], 1.0, &mut g)?;
                    Ok((g, loss, n))
                })
                .collect::<Result<_>>()?;
            let tokens: usize = parts.iter().map(|p| p.2).sum();
            let mut grads = generator.params.zeroed_grads();
            for (g, loss, _) in &parts {
                grads.add_scaled(1.0 / batch.len() as f64, g)?;
                epoch_loss += loss;
            }
            epoch_tokens += tokens;
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!("MLE gradient in epoch {epoch}")));
            }
            optimizer.step(&mut generator.params, &grads, Direction::Descend)?;
        }
        let mut rec = TrainRecord::new("mle", epoch, cfg.seed);
        rec.mle_nll = Some(epoch_loss / epoch_tokens as f64);
        if !val.is_empty() {
            rec.val_nll = Some(validation_nll(generator, val, cfg)?);
        }
        report.push(rec);
    }
    Ok(report)
}
