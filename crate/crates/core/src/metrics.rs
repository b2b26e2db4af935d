//! BLEU (clipped n-gram precision with brevity penalty), ROUGE-L, CIDEr and
//! distinct-n over token-id sequences. Callers pass sentence bodies (END
//! excluded).

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SCALE: f64 = 10.0;

/// Counts of every n-gram of one order.
pub type NGramCounts = BTreeMap<Vec<TokenId>, usize>;

pub fn ngram_counts(tokens: &[TokenId], n: usize) -> NGramCounts {
    let mut m = NGramCounts::new();
    if n == 0 {
        return m;
    }
    for w in tokens.windows(n) {
        *m.entry(w.to_vec()).or_insert(0) += 1;
    }
    m
}

/// `(clipped, total)`: candidate n-gram counts clipped by the largest count
/// in any single reference, and the candidate's n-gram total.
pub fn modified_precision(candidate: &[TokenId], refs: &[&[TokenId]], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let total = cand.values().sum();
    let ref_counts: Vec<NGramCounts> = refs.iter().map(|r| ngram_counts(r, n)).collect();
    let clipped = cand
        .iter()
        .map(|(g, &c)| {
            let max_ref = ref_counts.iter().map(|m| m.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            c.min(max_ref)
        })
        .sum();
    (clipped, total)
}

/// Reference length closest to `len`; ties go to the shorter reference.
pub fn closest_ref_len(len: usize, refs: &[&[TokenId]]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}

fn bleu_from_counts(clipped: &[usize], totals: &[usize], cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (&c, &t) in clipped.iter().zip(totals) {
        if c == 0 || t == 0 {
            return 0.0;
        }
        log_sum += (c as f64 / t as f64).ln();
    }
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * (log_sum / clipped.len() as f64).exp()
}

/// Sentence-level BLEU-`max_n` without smoothing.
pub fn sentence_bleu(candidate: &[TokenId], refs: &[&[TokenId]], max_n: usize) -> f64 {
    let (clipped, totals): (Vec<usize>, Vec<usize>) =
        (1..=max_n).map(|n| modified_precision(candidate, refs, n)).unzip();
    bleu_from_counts(&clipped, &totals, candidate.len(), closest_ref_len(candidate.len(), refs))
}

/// Corpus BLEU: clipped counts, totals and lengths are summed over the
/// corpus before the ratios are taken.
pub fn corpus_bleu(candidates: &[&[TokenId]], refs: &[Vec<&[TokenId]>], max_n: usize) -> Result<f64> {
    if candidates.len() != refs.len() {
        return Err(Error::Config("candidate and reference counts differ".into()));
    }
    let mut clipped = vec![0; max_n];
    let mut totals = vec![0; max_n];
    let (mut c_len, mut r_len) = (0, 0);
    for (cand, rs) in candidates.iter().zip(refs) {
        for n in 1..=max_n {
            let (c, t) = modified_precision(cand, rs, n);
            clipped[n - 1] += c;
            totals[n - 1] += t;
        }
        c_len += cand.len();
        r_len += closest_ref_len(cand.len(), rs);
    }
    Ok(bleu_from_counts(&clipped, &totals, c_len, r_len))
}

pub fn lcs_len(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure `(1 + b^2) R P / (R + b^2 P)` per reference, max over refs.
pub fn rouge_l(candidate: &[TokenId], refs: &[&[TokenId]]) -> f64 {
    refs.iter()
        .map(|r| {
            let l = lcs_len(candidate, r);
            if l == 0 {
                return 0.0;
            }
            let rec = l as f64 / r.len() as f64;
            let prec = l as f64 / candidate.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * rec * prec / (rec + b2 * prec)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiderScores {
    pub per_image: Vec<f64>,
    pub mean: f64,
}

fn tfidf(counts: &NGramCounts, df: &NGramCounts, log_m: f64) -> (BTreeMap<Vec<TokenId>, f64>, f64) {
    let mut v = BTreeMap::new();
    let mut norm = 0.0;
    for (g, &c) in counts {
        let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
        let w = c as f64 * (log_m - d.ln());
        norm += w * w;
        v.insert(g.clone(), w);
    }
    (v, norm.sqrt())
}

/// CIDEr over an evaluation set of images: for each order 1..=4, TF-IDF
/// vectors with `idf = log(M / df)` (df counted over reference sets),
/// cosine against each reference averaged over references, then averaged
/// over orders and scaled by 10.
pub fn cider(candidates: &[&[TokenId]], refs: &[Vec<&[TokenId]>]) -> Result<CiderScores> {
    if candidates.len() != refs.len() {
        return Err(Error::Config("candidate and reference counts differ".into()));
    }
    let m = candidates.len();
    if m < 2 {
        return Err(Error::Config("CIDEr needs at least two images".into()));
    }
    let log_m = (m as f64).ln();
    let mut per_image = vec![0.0; m];
    for n in 1..=CIDER_MAX_N {
        let mut df = NGramCounts::new();
        for rs in refs {
            let seen: BTreeSet<Vec<TokenId>> = rs.iter().flat_map(|r| ngram_counts(r, n).into_keys()).collect();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        for (i, (cand, rs)) in candidates.iter().zip(refs).enumerate() {
            if rs.is_empty() {
                return Err(Error::Empty("reference set"));
            }
            let (cv, cn) = tfidf(&ngram_counts(cand, n), &df, log_m);
            let mut sum = 0.0;
            for r in rs {
                let (rv, rn) = tfidf(&ngram_counts(r, n), &df, log_m);
                if cn > 0.0 && rn > 0.0 {
                    let dot: f64 = cv.iter().filter_map(|(g, w)| rv.get(g).map(|x| w * x)).sum();
                    sum += dot / (cn * rn);
                }
            }
            per_image[i] += sum / rs.len() as f64;
        }
    }
    for v in &mut per_image {
        *v *= CIDER_SCALE / CIDER_MAX_N as f64;
    }
    let mean = per_image.iter().sum::<f64>() / m as f64;
    Ok(CiderScores { per_image, mean })
}

/// Distinct n-grams over all n-grams in the set.
pub fn distinct_n(sentences: &[&[TokenId]], n: usize) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Empty("sentence set"));
    }
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for s in sentences {
        for w in s.windows(n.max(1)) {
            seen.insert(w);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { seen.len() as f64 / total as f64 })
}

/// Scores of one captioning system on an evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub images: usize,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub e_gan: Option<f64>,
    pub e_ngan: Option<f64>,
}

pub const METRIC_CSV_HEADER: &str = "system,images,bleu3,bleu4,rouge_l,cider,distinct1,distinct2,e_gan,e_ngan";

impl MetricReport {
    /// n-gram metrics of `candidates[i]` against `refs[i]`.
    pub fn compute(system: &str, candidates: &[&[TokenId]], refs: &[Vec<&[TokenId]>]) -> Result<Self> {
        let rouge = candidates
            .iter()
            .zip(refs)
            .map(|(c, r)| rouge_l(c, r))
            .sum::<f64>()
            / candidates.len().max(1) as f64;
        Ok(Self {
            system: system.to_string(),
            images: candidates.len(),
            bleu3: corpus_bleu(candidates, refs, 3)?,
            bleu4: corpus_bleu(candidates, refs, 4)?,
            rouge_l: rouge,
            cider: cider(candidates, refs)?.mean,
            distinct1: distinct_n(candidates, 1)?,
            distinct2: distinct_n(candidates, 2)?,
            e_gan: None,
            e_ngan: None,
        })
    }
}
