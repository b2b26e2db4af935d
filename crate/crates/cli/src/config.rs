//! Training configuration resolution: preset, then TOML file, then flags.

use std::path::{Path, PathBuf};

use captiongan::math::OptimizerKind;
use captiongan::trainer::{PolicyGradientMode, TrainConfig};
use captiongan::{Error, Result};
use clap::{Args, ValueEnum};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Library defaults.
    #[default]
    Default,
    /// Settings sized for a single-machine reproduction.
    Desk,
    /// A few seconds end to end; for tests.
    Smoke,
}

impl Preset {
    pub fn train_config(self) -> TrainConfig {
        let base = TrainConfig::default();
        let desk = TrainConfig {
            optimizer: OptimizerKind::adam(),
            learning_rate: 1e-3,
            mle_learning_rate: Some(1e-3),
            evaluator_learning_rate: Some(3e-3),
            pg_learning_rate: Some(3e-4),
            pg_batch_size: Some(16),
            rollout_min_prob: 0.01,
            adversarial_iters: 200,
            ..base.clone()
        };
        match self {
            Preset::Default => base,
            Preset::Desk => desk,
            Preset::Smoke => TrainConfig {
                batch_size: 16,
                pg_batch_size: Some(2),
                rollout_count: 2,
                t_max: 8,
                pretrain_epochs_g: 2,
                pretrain_epochs_e: 1,
                adversarial_iters: 2,
                noise_dim: 4,
                ..desk
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerChoice {
    Sgd,
    Momentum,
    Adam,
}

impl OptimizerChoice {
    fn kind(self) -> OptimizerKind {
        match self {
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
            OptimizerChoice::Momentum => OptimizerKind::Momentum { beta: 0.9 },
            OptimizerChoice::Adam => OptimizerKind::adam(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PgModeChoice {
    FullVocab,
    Sampled,
}

/// One flag per `TrainConfig` field.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// Starting point before the config file and flags are applied.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// TOML file with `TrainConfig` fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerChoice>,
    #[arg(long)]
    pub mle_learning_rate: Option<f64>,
    #[arg(long)]
    pub evaluator_learning_rate: Option<f64>,
    #[arg(long)]
    pub pg_learning_rate: Option<f64>,
    #[arg(long)]
    pub pg_batch_size: Option<usize>,
    #[arg(long)]
    pub rollout_count: Option<usize>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub pretrain_epochs_g: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs_e: Option<usize>,
    #[arg(long)]
    pub adversarial_iters: Option<usize>,
    #[arg(long)]
    pub g_steps_per_iter: Option<usize>,
    #[arg(long)]
    pub e_steps_per_iter: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub noise_dim: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub refs_per_image: Option<usize>,
    #[arg(long)]
    pub gen_per_image: Option<usize>,
    #[arg(long)]
    pub mism_per_image: Option<usize>,
    #[arg(long)]
    pub rollout_stride: Option<usize>,
    #[arg(long)]
    pub rollout_min_prob: Option<f64>,
    #[arg(long, value_enum)]
    pub pg_mode: Option<PgModeChoice>,
    #[arg(long)]
    pub baseline: Option<bool>,
}

macro_rules! overlay {
    ($map:ident, $flags:ident, $($field:ident),* $(,)?) => {
        $(
            if let Some(v) = &$flags.$field {
                $map.insert(stringify!($field).to_string(), serde_json::to_value(v)?);
            }
        )*
    };
}

impl TrainFlags {
    /// Fields given on the command line, as a JSON object.
    pub fn overrides(&self) -> Result<Map<String, Value>> {
        let mut map = Map::new();
        overlay!(
            map,
            self,
            seed,
            batch_size,
            learning_rate,
            mle_learning_rate,
            evaluator_learning_rate,
            pg_learning_rate,
            pg_batch_size,
            rollout_count,
            t_max,
            alpha,
            beta,
            pretrain_epochs_g,
            pretrain_epochs_e,
            adversarial_iters,
            g_steps_per_iter,
            e_steps_per_iter,
            temperature,
            noise_dim,
            noise_sigma,
            refs_per_image,
            gen_per_image,
            mism_per_image,
            rollout_stride,
            rollout_min_prob,
            baseline,
        );
        if let Some(o) = self.optimizer {
            map.insert("optimizer".into(), serde_json::to_value(o.kind())?);
        }
        if let Some(m) = self.pg_mode {
            let mode = match m {
                PgModeChoice::FullVocab => PolicyGradientMode::FullVocab,
                PgModeChoice::Sampled => PolicyGradientMode::Sampled,
            };
            map.insert("pg_mode".into(), serde_json::to_value(mode)?);
        }
        Ok(map)
    }

    pub fn resolve(&self) -> Result<TrainConfig> {
        self.resolve_from(self.preset.unwrap_or_default().train_config())
    }

    pub fn resolve_from(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut value = serde_json::to_value(base)?;
        if let Some(path) = &self.config {
            merge(&mut value, read_toml(path)?);
        }
        merge(&mut value, Value::Object(self.overrides()?));
        let cfg: TrainConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_toml(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    let parsed: toml::Value =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::to_value(parsed)?)
}

/// Recursive object merge; `optimizer` tables replace rather than merge so
/// a change of kind drops the old kind's fields.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if k != "optimizer" && slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_preset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "batch_size = 8\nalpha = 0.25\n[optimizer]\nkind = \"momentum\"\nbeta = 0.5\n").unwrap();
        let flags = TrainFlags {
            preset: Some(Preset::Desk),
            config: Some(path),
            alpha: Some(0.75),
            ..TrainFlags::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.batch_size, 8);
        assert_eq!(cfg.alpha, 0.75);
        assert_eq!(cfg.optimizer, OptimizerKind::Momentum { beta: 0.5 });
        assert_eq!(cfg.pg_learning_rate, Some(3e-4));
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "batch_sise = 8\n").unwrap();
        let flags = TrainFlags {
            config: Some(path),
            ..TrainFlags::default()
        };
        assert!(matches!(flags.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn no_flags_gives_the_preset() {
        assert_eq!(TrainFlags::default().resolve().unwrap(), TrainConfig::default());
        let desk = TrainFlags {
            preset: Some(Preset::Desk),
            ..TrainFlags::default()
        };
        assert_eq!(desk.resolve().unwrap(), Preset::Desk.train_config());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let flags = TrainFlags {
            batch_size: Some(0),
            ..TrainFlags::default()
        };
        assert!(flags.resolve().is_err());
    }
}
