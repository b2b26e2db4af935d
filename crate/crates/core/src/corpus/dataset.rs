use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::sample_captions;
use super::scene::{render_feature, FeatureVector, Scene, FEATURE_DIM};
use super::vocab::{Sentence, Vocabulary};
use crate::digest::sha256;
use crate::error::{shape_err, Error, Result};
use crate::math::rng::stream;

pub const MIN_REFERENCES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// 80/10/10 assignment from a digest of the scene id.
    pub fn for_id(id: &str) -> Split {
        match sha256(id.as_bytes())[0] % 10 {
            8 => Split::Val,
            9 => Split::Test,
            _ => Split::Train,
        }
    }
}

/// One scene with its features and human-style references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub feature: FeatureVector,
    pub refs: Vec<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
}

impl CorpusRecord {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.feature.dim() != feature_dim {
            return Err(shape_err(
                format!("feature of record {}", self.id),
                feature_dim,
                self.feature.dim(),
            ));
        }
        if self.refs.len() < MIN_REFERENCES {
            return Err(Error::Invariant(format!(
                "record {} has {} references, at least {MIN_REFERENCES} required",
                self.id,
                self.refs.len()
            )));
        }
        if !self.feature.0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("feature of record {}", self.id)));
        }
        if let Some(scene) = &self.scene {
            scene.validate()?;
        }
        Ok(())
    }
}

/// Deterministic synthetic corpus: `n_scenes` distinct scenes, each with
/// `refs_per_scene` captions.
pub fn generate_corpus(seed: u64, n_scenes: usize, refs_per_scene: usize) -> Result<Vec<CorpusRecord>> {
    generate_corpus_with_dim(seed, n_scenes, refs_per_scene, FEATURE_DIM)
}

pub fn generate_corpus_with_dim(
    seed: u64,
    n_scenes: usize,
    refs_per_scene: usize,
    feature_dim: usize,
) -> Result<Vec<CorpusRecord>> {
    if refs_per_scene < MIN_REFERENCES {
        return Err(Error::Config(format!(
            "refs_per_scene must be at least {MIN_REFERENCES}, got {refs_per_scene}"
        )));
    }
    let mut scene_rng = stream(seed, &[1]);
    let mut seen: HashSet<String> = HashSet::new();
    let mut records = Vec::with_capacity(n_scenes);
    let mut attempts = 0usize;
    while records.len() < n_scenes {
        attempts += 1;
        if attempts > 50 * n_scenes + 1000 {
            return Err(Error::Config(format!("cannot draw {n_scenes} distinct scenes")));
        }
        let scene = Scene::random(&mut scene_rng, seed);
        if !seen.insert(scene.id.clone()) {
            continue;
        }
        let mut caption_rng = stream(seed, &[2, records.len() as u64]);
        let refs = sample_captions(&mut caption_rng, &scene, refs_per_scene);
        let feature = render_feature(&scene, feature_dim)?;
        records.push(CorpusRecord {
            id: scene.id.clone(),
            feature,
            refs,
            split: Split::for_id(&scene.id),
            scene: Some(scene),
        });
    }
    Ok(records)
}

pub fn to_jsonl(records: &[CorpusRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_jsonl(records)?.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Reads and validates a dataset JSONL file.
pub fn load_dataset(path: &Path, feature_dim: usize) -> Result<Vec<CorpusRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate(feature_dim)?;
        if !ids.insert(record.id.clone()) {
            return Err(Error::Invariant(format!("duplicate record id {}", record.id)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Ok(records)
}

pub fn split_records(records: &[CorpusRecord], split: Split) -> Vec<&CorpusRecord> {
    records.iter().filter(|r| r.split == split).collect()
}

pub fn build_vocabulary(records: &[CorpusRecord], min_count: u64) -> Result<Vocabulary> {
    let train: Vec<&str> = records
        .iter()
        .filter(|r| r.split == Split::Train)
        .flat_map(|r| r.refs.iter().map(String::as_str))
        .collect();
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    Vocabulary::build(train, min_count)
}

/// A record with its references encoded under one vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedRecord {
    pub id: String,
    pub feature: Vec<f64>,
    pub refs: Vec<Sentence>,
    pub split: Split,
}

pub fn encode_records<'a, I>(records: I, vocab: &Vocabulary, t_max: usize) -> Vec<EncodedRecord>
where
    I: IntoIterator<Item = &'a CorpusRecord>,
{
    records
        .into_iter()
        .map(|r| EncodedRecord {
            id: r.id.clone(),
            feature: r.feature.0.clone(),
            refs: r.refs.iter().map(|s| vocab.encode(s, t_max)).collect(),
            split: r.split,
        })
        .collect()
}

/// Records that carry a reference set.
pub trait References {
    type Item;
    fn references(&self) -> &[Self::Item];
}

impl References for CorpusRecord {
    type Item = String;
    fn references(&self) -> &[String] {
        &self.refs
    }
}

impl References for EncodedRecord {
    type Item = Sentence;
    fn references(&self) -> &[Sentence] {
        &self.refs
    }
}

/// Draws uniformly from the union of every other record's references.
pub fn sample_mismatched<'a, T: References, R: Rng + ?Sized>(
    records: &'a [T],
    index: usize,
    rng: &mut R,
) -> Result<&'a T::Item> {
    if records.len() < 2 {
        return Err(Error::Config("mismatched sampling needs at least two records".into()));
    }
    if index >= records.len() {
        return Err(Error::Config(format!("record index {index} out of range")));
    }
    let total: usize = records.iter().map(|r| r.references().len()).sum();
    let own = records[index].references().len();
    let eligible = total - own;
    if eligible == 0 {
        return Err(Error::Empty("mismatched candidates"));
    }
    let mut k = rng.random_range(0..eligible);
    for (j, r) in records.iter().enumerate() {
        if j == index {
            continue;
        }
        let n = r.references().len();
        if k < n {
            return Ok(&r.references()[k]);
        }
        k -= n;
    }
    unreachable!("k < eligible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::grammar::{shape_words, terminals};
    use crate::math::rng::seeded;

    #[test]
    fn generation_is_deterministic() {
        let a = to_jsonl(&generate_corpus(7, 10, 5).unwrap()).unwrap();
        let b = to_jsonl(&generate_corpus(7, 10, 5).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = to_jsonl(&generate_corpus(8, 10, 5).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn references_name_each_object() {
        for r in generate_corpus(3, 50, 5).unwrap() {
            let scene = r.scene.as_ref().unwrap();
            assert_eq!(r.refs.len(), 5);
            for text in &r.refs {
                for obj in &scene.objects {
                    assert!(text.split_whitespace().any(|w| shape_words(obj.shape).contains(&w)));
                }
            }
        }
    }

    #[test]
    fn too_few_refs_rejected() {
        assert!(generate_corpus(1, 3, 4).is_err());
    }

    #[test]
    fn splits_partition_the_corpus() {
        let corpus = generate_corpus(7, 400, 5).unwrap();
        let mut total = 0;
        for split in [Split::Train, Split::Val, Split::Test] {
            total += split_records(&corpus, split).len();
        }
        assert_eq!(total, corpus.len());
        let ids: HashSet<_> = corpus.iter().map(|r| &r.id).collect();
        assert_eq!(ids.len(), corpus.len());
        let train = split_records(&corpus, Split::Train).len() as f64 / corpus.len() as f64;
        assert!((0.7..0.9).contains(&train), "{train}");
    }

    #[test]
    fn terminals_survive_vocabulary_threshold() {
        let corpus = generate_corpus(7, 500, 5).unwrap();
        let vocab = build_vocabulary(&corpus, 5).unwrap();
        for t in terminals() {
            assert!(vocab.id(t).is_some(), "{t} fell below threshold");
        }
        assert_eq!(vocab.len(), terminals().len() + 3);
    }

    #[test]
    fn mismatched_two_records() {
        let corpus = generate_corpus(5, 2, 5).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            let s = sample_mismatched(&corpus, 0, &mut rng).unwrap();
            assert!(corpus[1].refs.contains(s));
            assert!(!corpus[0].refs.contains(s));
        }
        assert!(sample_mismatched(&corpus[..1], 0, &mut rng).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let corpus = generate_corpus(11, 12, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&path, &corpus).unwrap();
        assert_eq!(load_dataset(&path, FEATURE_DIM).unwrap(), corpus);
    }

    #[test]
    fn load_rejects_bad_records() {
        let corpus = generate_corpus(11, 3, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let mut short = corpus.clone();
        short[1].refs.pop();
        let path = dir.path().join("short.jsonl");
        save_dataset(&path, &short).unwrap();
        let err = load_dataset(&path, FEATURE_DIM).unwrap_err().to_string();
        assert!(err.contains("at least 5"), "{err}");

        let mut wide = corpus.clone();
        wide[2].feature.0.push(0.0);
        let path = dir.path().join("wide.jsonl");
        save_dataset(&path, &wide).unwrap();
        let err = load_dataset(&path, FEATURE_DIM).unwrap_err().to_string();
        assert!(err.contains(&corpus[2].id), "{err}");

        let path = dir.path().join("broken.jsonl");
        let mut text = to_jsonl(&corpus).unwrap();
        text.push_str("{not json\n");
        std::fs::write(&path, text).unwrap();
        match load_dataset(&path, FEATURE_DIM) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
