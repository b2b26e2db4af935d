//! Datasets, checkpoints and caption files as the subcommands see them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use captiongan::corpus::{
    build_vocabulary, encode_records, load_dataset, CorpusRecord, EncodedRecord, Sentence, Split, Vocabulary,
    DEFAULT_MIN_COUNT, FEATURE_DIM,
};
use captiongan::evaluator::{Evaluator, EvaluatorConfig};
use captiongan::generator::{Generator, GeneratorConfig};
use captiongan::math::checkpoint::{self, CheckpointHeader};
use captiongan::trainer::TrainConfig;
use captiongan::{Error, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const OUT_ENV: &str = "CAPTIONGAN_OUT";

/// `$CAPTIONGAN_OUT`, else `captiongan-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("captiongan-out"))
}

/// The explicit path, else `name` under the default output directory.
pub fn out_path(explicit: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let path = explicit.unwrap_or_else(|| default_out_dir().join(name));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl SplitChoice {
    fn keeps(self, split: Split) -> bool {
        match self {
            SplitChoice::Train => split == Split::Train,
            SplitChoice::Val => split == Split::Val,
            SplitChoice::Test => split == Split::Test,
            SplitChoice::All => true,
        }
    }
}

/// A dataset file with the vocabulary built from its training split.
pub struct Dataset {
    pub records: Vec<CorpusRecord>,
    pub vocab: Vocabulary,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(load_dataset(path, FEATURE_DIM)?)
    }

    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self> {
        let vocab = build_vocabulary(&records, DEFAULT_MIN_COUNT)?;
        Ok(Self { records, vocab })
    }

    pub fn encoded(&self, split: SplitChoice, t_max: usize) -> Vec<EncodedRecord> {
        encode_records(self.records.iter().filter(|r| split.keeps(r.split)), &self.vocab, t_max)
    }
}

pub const GENERATOR_KIND: &str = "generator";
pub const EVALUATOR_KIND: &str = "evaluator";

fn header(kind: &str, model: serde_json::Value, cfg: &TrainConfig, vocab: &Vocabulary, manifest: &str) -> CheckpointHeader {
    CheckpointHeader {
        kind: kind.to_string(),
        seed: cfg.seed,
        vocab_hash: vocab.hash(),
        hyperparameters: json!({ "model": model, "train": cfg }),
        manifest: Some(manifest.to_string()),
    }
}

pub fn generator_config(vocab: &Vocabulary, cfg: &TrainConfig) -> GeneratorConfig {
    GeneratorConfig {
        noise_dim: cfg.noise_dim,
        ..GeneratorConfig::for_vocab(vocab, FEATURE_DIM)
    }
}

pub fn evaluator_config(vocab: &Vocabulary) -> EvaluatorConfig {
    EvaluatorConfig::for_vocab(vocab, FEATURE_DIM)
}

/// Writes the checkpoint and returns its sha256.
pub fn save_generator(
    path: &Path,
    g: &Generator,
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    manifest: &str,
) -> Result<String> {
    let h = header(GENERATOR_KIND, serde_json::to_value(g.config())?, cfg, vocab, manifest);
    checkpoint::save(path, &h, &g.params)
}

pub fn save_evaluator(
    path: &Path,
    e: &Evaluator,
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    manifest: &str,
) -> Result<String> {
    let h = header(EVALUATOR_KIND, serde_json::to_value(e.config())?, cfg, vocab, manifest);
    checkpoint::save(path, &h, &e.params)
}

fn open(path: &Path, kind: &str, vocab: Option<&Vocabulary>) -> Result<(CheckpointHeader, captiongan::ParamStore64)> {
    let (h, params) = checkpoint::load::<f64>(path)?;
    if h.kind != kind {
        return Err(Error::Checkpoint(format!(
            "{} holds a {}, expected a {kind}",
            path.display(),
            h.kind
        )));
    }
    if let Some(v) = vocab {
        if v.hash() != h.vocab_hash {
            return Err(Error::VocabMismatch {
                expected: h.vocab_hash,
                actual: v.hash(),
            });
        }
    }
    Ok((h, params))
}

fn model<T: for<'de> Deserialize<'de>>(h: &CheckpointHeader) -> Result<T> {
    serde_json::from_value(h.hyperparameters["model"].clone())
        .map_err(|e| Error::Checkpoint(format!("model hyperparameters: {e}")))
}

pub fn load_generator(path: &Path, vocab: Option<&Vocabulary>) -> Result<(Generator, CheckpointHeader)> {
    let (h, params) = open(path, GENERATOR_KIND, vocab)?;
    Ok((Generator::from_params(&model(&h)?, params)?, h))
}

pub fn load_evaluator(path: &Path, vocab: Option<&Vocabulary>) -> Result<(Evaluator, CheckpointHeader)> {
    let (h, params) = open(path, EVALUATOR_KIND, vocab)?;
    Ok((Evaluator::from_params(&model(&h)?, params)?, h))
}

/// Short checkpoint digest used in probe file names.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(captiongan::digest::sha256_hex(&std::fs::read(path)?)[..12].to_string())
}

/// One line of a captions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionLine {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

pub fn captions_jsonl(records: &[EncodedRecord], captions: &[Sentence], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for (r, s) in records.iter().zip(captions) {
        let line = CaptionLine {
            id: r.id.clone(),
            text: vocab.decode(s),
            truncated: s.is_truncated(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_captions(path: &Path) -> Result<BTreeMap<String, CaptionLine>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: CaptionLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(c.id.clone(), c).is_some() {
            return Err(Error::Invariant(format!("{}: duplicate caption id on line {}", path.display(), i + 1)));
        }
    }
    Ok(out)
}

/// Encodes the caption of every record, failing on any missing id.
pub fn align_captions(
    records: &[EncodedRecord],
    lines: &BTreeMap<String, CaptionLine>,
    vocab: &Vocabulary,
    t_max: usize,
    source: &str,
) -> Result<Vec<Sentence>> {
    records
        .iter()
        .map(|r| {
            let c = lines
                .get(&r.id)
                .ok_or_else(|| Error::Invariant(format!("{source} has no caption for image {}", r.id)))?;
            let s = vocab.encode(&c.text, t_max);
            Ok(if c.truncated {
                Sentence::from_body(s.body().to_vec(), true)
            } else {
                s
            })
        })
        .collect()
}
