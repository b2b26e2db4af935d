//! Evaluation protocols: the metric table with a held-out human system,
//! caption retrieval, diversity under noise, and the similar-scene probe.

use std::collections::BTreeSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{render_feature, EncodedRecord, Scene, Sentence, TokenId};
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::generator::{beam_search, Generator, NoiseVector};
use crate::math::rng::stream;
use crate::metrics::{distinct_n, MetricReport};

const HUMAN_TAG: u64 = 0x48554d;
const DECODE_TAG: u64 = 0x444543;
const DIVERSITY_TAG: u64 = 0x444956;
const SIMILAR_TAG: u64 = 0x53494d;

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

/// Captions of one system, one per evaluation image.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemCaptions {
    pub name: String,
    pub captions: Vec<Sentence>,
    /// Reference index each caption was copied from (human system only).
    pub held_out: Option<Vec<usize>>,
}

/// Picks one reference per record as the human caption.
pub fn human_system(records: &[EncodedRecord], seed: u64) -> Result<SystemCaptions> {
    let mut captions = Vec::with_capacity(records.len());
    let mut held = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.refs.len() < 2 {
            return Err(Error::Config(format!("record {} needs two references for the human protocol", r.id)));
        }
        let k = stream(seed, &[HUMAN_TAG, i as u64]).random_range(0..r.refs.len());
        captions.push(r.refs[k].clone());
        held.push(k);
    }
    Ok(SystemCaptions {
        name: "human".into(),
        captions,
        held_out: Some(held),
    })
}

/// References of image `i` minus every index held out by any system.
fn references<'a>(records: &'a [EncodedRecord], systems: &[SystemCaptions]) -> Vec<Vec<&'a [TokenId]>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let excluded: BTreeSet<usize> = systems
                .iter()
                .filter_map(|s| s.held_out.as_ref().map(|h| h[i]))
                .collect();
            r.refs
                .iter()
                .enumerate()
                .filter(|(k, _)| !excluded.contains(k))
                .map(|(_, s)| s.body())
                .collect()
        })
        .collect()
}

fn mean_score(evaluator: &Evaluator, records: &[EncodedRecord], captions: &[Sentence]) -> Result<f64> {
    let scores: Vec<f64> = records
        .par_iter()
        .zip(captions.par_iter())
        .map(|(r, c)| Ok(evaluator.score(&r.feature, c)?.score))
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// One report per system. Held-out human references never serve as
/// references for any system.
pub fn run_metric_table(
    records: &[EncodedRecord],
    systems: &[SystemCaptions],
    e_gan: Option<&Evaluator>,
    e_ngan: Option<&Evaluator>,
) -> Result<Vec<MetricReport>> {
    for s in systems {
        if s.captions.len() != records.len() {
            return Err(Error::Config(format!(
                "system {} has {} captions for {} images",
                s.name,
                s.captions.len(),
                records.len()
            )));
        }
    }
    let refs = references(records, systems);
    if refs.iter().any(|r| r.is_empty()) {
        return Err(Error::Empty("references after holding out human captions"));
    }
    systems
        .iter()
        .map(|s| {
            let bodies: Vec<&[TokenId]> = s.captions.iter().map(|c| c.body()).collect();
            let mut rep = MetricReport::compute(&s.name, &bodies, &refs)?;
            rep.e_gan = e_gan.map(|e| mean_score(e, records, &s.captions)).transpose()?;
            rep.e_ngan = e_ngan.map(|e| mean_score(e, records, &s.captions)).transpose()?;
            Ok(rep)
        })
        .collect()
}

/// How test captions are produced.
#[derive(Clone, Copy, Debug)]
pub enum Decoding<'a> {
    Greedy,
    Sample { temperature: f64 },
    /// Beam on log-probability; final pick by the evaluator's score if
    /// given, otherwise by log-likelihood.
    Beam { width: usize, scorer: Option<&'a Evaluator> },
}

/// One caption per record. Record `i` draws its noise from the stream
/// `[seed, DECODE, i]` with standard deviation `sigma`.
pub fn decode_captions(
    generator: &Generator,
    records: &[EncodedRecord],
    decoding: Decoding<'_>,
    sigma: f64,
    t_max: usize,
    seed: u64,
) -> Result<Vec<Sentence>> {
    let dim = generator.config().noise_dim;
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = stream(seed, &[DECODE_TAG, i as u64]);
            let z = NoiseVector::sample(dim, sigma, &mut rng);
            match decoding {
                Decoding::Greedy => generator.greedy(&r.feature, &z, t_max),
                Decoding::Sample { temperature } => generator.sample_sentence(&r.feature, &z, t_max, temperature, &mut rng),
                Decoding::Beam { width, scorer } => match scorer {
                    Some(e) => {
                        let f = &r.feature;
                        let by_reward = |s: &Sentence, _: f64| Ok(e.score(f, s)?.score);
                        beam_search(generator, f, &z, width, t_max, &by_reward)
                    }
                    None => {
                        let by_loglik = |_: &Sentence, lp: f64| Ok(lp);
                        beam_search(generator, &r.feature, &z, width, t_max, &by_loglik)
                    }
                },
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingCriterion {
    Similarity,
    LogLikelihood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub criterion: RankingCriterion,
    pub images: usize,
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    /// 1-based rank of the source image for each query.
    pub source_rank: Vec<usize>,
    /// Highest-ranked image ids per query, `max(ks)` of them.
    pub top: Vec<Vec<String>>,
}

/// Ranks every image for each caption by `score(image, caption)`
/// (descending, ties by image id) and reports recall@k.
pub fn retrieval_recall<F>(
    ids: &[String],
    captions: usize,
    ks: &[usize],
    criterion: RankingCriterion,
    score: F,
) -> Result<RetrievalResult>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let m = ids.len();
    if captions != m {
        return Err(Error::Config("retrieval needs one caption per image".into()));
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if m < kmax || ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(format!("recall@k needs 1 <= k <= {m}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let per_query: Vec<(usize, Vec<String>)> = (0..m)
        .into_par_iter()
        .map(|q| {
            let mut scored: Vec<(f64, usize)> = order
                .iter()
                .map(|&img| Ok((score(img, q)?, img)))
                .collect::<Result<_>>()?;
            if scored.iter().any(|(s, _)| s.is_nan()) {
                return Err(Error::NonFinite("retrieval score".into()));
            }
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| ids[a.1].cmp(&ids[b.1])));
            let rank = scored.iter().position(|&(_, img)| img == q).unwrap() + 1;
            let top = scored.iter().take(kmax).map(|&(_, img)| ids[img].clone()).collect();
            Ok((rank, top))
        })
        .collect::<Result<_>>()?;
    let recall = ks
        .iter()
        .map(|&k| per_query.iter().filter(|(r, _)| *r <= k).count() as f64 / m as f64)
        .collect();
    let (source_rank, top) = per_query.into_iter().unzip();
    Ok(RetrievalResult {
        criterion,
        images: m,
        ks: ks.to_vec(),
        recall,
        source_rank,
        top,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub sigma: f64,
    pub image: String,
    pub distinct_sentences: usize,
    pub distinct1: f64,
    pub distinct2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub z_draws: usize,
    pub rows: Vec<DiversityRow>,
}

impl DiversityReport {
    /// Fraction of images at `sigma` with at least `min_distinct` outputs.
    pub fn fraction_at_least(&self, sigma: f64, min_distinct: usize) -> f64 {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.sigma == sigma).collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().filter(|r| r.distinct_sentences >= min_distinct).count() as f64 / rows.len() as f64
    }

    pub fn max_distinct(&self, sigma: f64) -> usize {
        self.rows
            .iter()
            .filter(|r| r.sigma == sigma)
            .map(|r| r.distinct_sentences)
            .max()
            .unwrap_or(0)
    }
}

/// Greedy decodes under `z_draws` noise draws per image and sigma.
pub fn diversity_probe(
    generator: &Generator,
    records: &[EncodedRecord],
    z_draws: usize,
    sigmas: &[f64],
    t_max: usize,
    seed: u64,
) -> Result<DiversityReport> {
    let dim = generator.config().noise_dim;
    let mut rows = Vec::new();
    for &sigma in sigmas {
        let part: Vec<DiversityRow> = records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let outs: Vec<Sentence> = (0..z_draws)
                    .map(|d| {
                        let mut rng = stream(seed, &[DIVERSITY_TAG, i as u64, d as u64]);
                        let z = NoiseVector::sample(dim, sigma, &mut rng);
                        generator.greedy(&r.feature, &z, t_max)
                    })
                    .collect::<Result<_>>()?;
                let bodies: Vec<&[TokenId]> = outs.iter().map(|s| s.body()).collect();
                let distinct: BTreeSet<&[TokenId]> = bodies.iter().copied().collect();
                Ok(DiversityRow {
                    sigma,
                    image: r.id.clone(),
                    distinct_sentences: distinct.len(),
                    distinct1: if z_draws == 0 { 0.0 } else { distinct_n(&bodies, 1)? },
                    distinct2: if z_draws == 0 { 0.0 } else { distinct_n(&bodies, 2)? },
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(part);
    }
    Ok(DiversityReport { z_draws, rows })
}

/// A scene and a copy with one attribute changed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePair {
    pub left: Scene,
    pub right: Scene,
    pub left_feature: Vec<f64>,
    pub right_feature: Vec<f64>,
}

pub fn mutation_pairs(count: usize, feature_dim: usize, seed: u64) -> Result<Vec<ScenePair>> {
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, &[SIMILAR_TAG, 1, i as u64]);
            let left = Scene::random(&mut rng, seed ^ (2 * i as u64));
            let right = left.mutate_one(&mut rng, seed ^ (2 * i as u64 + 1));
            Ok(ScenePair {
                left_feature: render_feature(&left, feature_dim)?.0,
                right_feature: render_feature(&right, feature_dim)?.0,
                left,
                right,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub system: String,
    pub pairs: usize,
    pub identical: usize,
    pub fraction: f64,
}

/// Fraction of pairs whose greedy outputs are identical. Both scenes of a
/// pair share one noise draw.
pub fn similarity_probe(
    system: &str,
    generator: &Generator,
    pairs: &[ScenePair],
    sigma: f64,
    t_max: usize,
    seed: u64,
) -> Result<SimilarityReport> {
    let dim = generator.config().noise_dim;
    let same: Vec<bool> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let z = NoiseVector::sample(dim, sigma, &mut stream(seed, &[SIMILAR_TAG, 2, i as u64]));
            Ok(generator.greedy(&p.left_feature, &z, t_max)? == generator.greedy(&p.right_feature, &z, t_max)?)
        })
        .collect::<Result<_>>()?;
    let identical = same.iter().filter(|&&b| b).count();
    Ok(SimilarityReport {
        system: system.to_string(),
        pairs: pairs.len(),
        identical,
        fraction: if pairs.is_empty() { 0.0 } else { identical as f64 / pairs.len() as f64 },
    })
}
