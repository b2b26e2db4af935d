//! Evaluation steps shared by the subcommands and `repro-all`.

use captiongan::corpus::{EncodedRecord, Sentence};
use captiongan::evaluator::Evaluator;
use captiongan::generator::{Generator, NoiseVector};
use captiongan::harness::{retrieval_recall, RankingCriterion, RetrievalResult, SystemCaptions, DEFAULT_KS};
use captiongan::{Error, Result};

/// A caption file submitted as the human system: every caption must be one
/// of its image's references, and that reference is held out.
pub fn human_from_captions(records: &[EncodedRecord], captions: Vec<Sentence>) -> Result<SystemCaptions> {
    let held = records
        .iter()
        .zip(&captions)
        .map(|(r, c)| {
            r.refs.iter().position(|x| x.body() == c.body()).ok_or_else(|| {
                Error::Invariant(format!(
                    "human caption for image {} is not one of its references",
                    r.id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemCaptions {
        name: "human".into(),
        captions,
        held_out: Some(held),
    })
}

pub fn system(name: &str, captions: Vec<Sentence>) -> SystemCaptions {
    SystemCaptions {
        name: name.to_string(),
        captions,
        held_out: None,
    }
}

fn check_images(records: &[EncodedRecord], images: usize) -> Result<&[EncodedRecord]> {
    if records.len() < images {
        return Err(Error::Config(format!(
            "retrieval over {images} images needs that many records, found {}",
            records.len()
        )));
    }
    Ok(&records[..images])
}

/// Ranks images by evaluator score against each caption.
pub fn similarity_retrieval(
    evaluator: &Evaluator,
    records: &[EncodedRecord],
    captions: &[Sentence],
    images: usize,
) -> Result<RetrievalResult> {
    let records = check_images(records, images)?;
    let image_emb = records
        .iter()
        .map(|r| evaluator.embed_image(&r.feature))
        .collect::<Result<Vec<_>>>()?;
    let sent_emb = captions[..images]
        .iter()
        .map(|c| evaluator.embed_sentence(c))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    retrieval_recall(&ids, images, &DEFAULT_KS, RankingCriterion::Similarity, |img, q| {
        Ok(Evaluator::score_embeddings(&image_emb[img], &sent_emb[q]))
    })
}

/// Ranks images by generator log-likelihood of each caption with `z = 0`.
pub fn loglik_retrieval(
    generator: &Generator,
    records: &[EncodedRecord],
    captions: &[Sentence],
    images: usize,
) -> Result<RetrievalResult> {
    let records = check_images(records, images)?;
    let z = NoiseVector::zeros(generator.config().noise_dim);
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    retrieval_recall(&ids, images, &DEFAULT_KS, RankingCriterion::LogLikelihood, |img, q| {
        generator.log_likelihood(&records[img].feature, &z, &captions[q])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use captiongan::corpus::Split;

    fn record(id: &str, refs: &[&[usize]]) -> EncodedRecord {
        EncodedRecord {
            id: id.into(),
            feature: vec![0.0; 2],
            refs: refs.iter().map(|r| Sentence::from_body(r.to_vec(), false)).collect(),
            split: Split::Test,
        }
    }

    #[test]
    fn human_captions_hold_out_their_source() {
        let recs = [record("a", &[&[2, 3], &[4]]), record("b", &[&[5], &[6, 7]])];
        let caps = vec![Sentence::from_body(vec![4], false), Sentence::from_body(vec![5], false)];
        let h = human_from_captions(&recs, caps).unwrap();
        assert_eq!(h.held_out, Some(vec![1, 0]));
    }

    #[test]
    fn human_captions_must_be_references() {
        let recs = [record("a", &[&[2, 3], &[4]])];
        let caps = vec![Sentence::from_body(vec![3], false)];
        assert!(matches!(human_from_captions(&recs, caps), Err(Error::Invariant(_))));
    }
}
