use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged training iteration (an epoch for pretraining phases).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub phase: String,
    pub iteration: usize,
    pub seed: u64,
    pub mle_nll: Option<f64>,
    pub val_nll: Option<f64>,
    pub g_reward: Option<f64>,
    pub e_loss: Option<f64>,
    pub score_ref: Option<f64>,
    pub score_gen: Option<f64>,
    pub score_mism: Option<f64>,
}

impl TrainRecord {
    pub fn new(phase: &str, iteration: usize, seed: u64) -> Self {
        Self {
            phase: phase.to_string(),
            iteration,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
}

pub const CSV_HEADER: &str = "phase,iteration,seed,mle_nll,val_nll,g_reward,e_loss,score_ref,score_gen,score_mism";

impl TrainReport {
    pub fn push(&mut self, record: TrainRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: TrainReport) {
        self.records.extend(other.records);
    }

    pub fn phase<'a>(&'a self, phase: &'a str) -> impl Iterator<Item = &'a TrainRecord> + 'a {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { records })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Invariant(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
        let mut out = format!("{CSV_HEADER}\n").into_bytes();
        out.extend(body);
        String::from_utf8(out).map_err(|e| Error::Invariant(e.to_string()))
    }

    /// Writes `<stem>.jsonl` and `<stem>.csv`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut f = std::fs::File::create(stem.with_extension("jsonl"))?;
        f.write_all(self.to_jsonl()?.as_bytes())?;
        std::fs::write(stem.with_extension("csv"), self.to_csv()?)?;
        Ok(())
    }
}
