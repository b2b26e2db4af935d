use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use captiongan::digest::sha256_hex;
use captiongan::Result;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const TOOL_VERSION: &str = concat!("captiongan ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&std::fs::read(path)?),
        })
    }
}

/// Record of one run. `id` hashes everything that determines the outputs
/// (subcommand, config, seed, input digests), so reruns share it; it is
/// stamped into every checkpoint header and JSON report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub subcommand: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub checkpoints: BTreeMap<String, String>,
    /// Wall-clock milliseconds per pipeline stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageTime>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTime {
    pub name: String,
    pub millis: u128,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn begin(subcommand: &str, seed: u64, config: Value, inputs: &[&Path]) -> Result<Self> {
        let inputs = inputs.iter().map(|p| Artifact::of(p)).collect::<Result<Vec<_>>>()?;
        let digests: Vec<&str> = inputs.iter().map(|a| a.sha256.as_str()).collect();
        let key = json!({
            "subcommand": subcommand,
            "tool_version": TOOL_VERSION,
            "seed": seed,
            "config": config,
            "inputs": digests,
        });
        let id = sha256_hex(serde_json::to_string(&key)?.as_bytes())[..16].to_string();
        Ok(Self {
            id,
            subcommand: subcommand.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config,
            inputs,
            outputs: Vec::new(),
            checkpoints: BTreeMap::new(),
            stages: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        })
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn checkpoint(&mut self, name: &str, path: &Path, sha256: String) {
        self.checkpoints.insert(name.to_string(), sha256.clone());
        self.outputs.push(Artifact {
            path: path.display().to_string(),
            sha256,
        });
    }

    pub fn stage(&mut self, name: &str, since: Instant) {
        self.stages.push(StageTime {
            name: name.to_string(),
            millis: since.elapsed().as_millis(),
        });
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// `<dir>/<stem>.manifest.json` next to a run's primary output.
pub fn manifest_path(primary: &Path) -> std::path::PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    primary.with_file_name(format!("{stem}.manifest.json"))
}
