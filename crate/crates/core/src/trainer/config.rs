use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::OptimizerKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyGradientMode {
    /// Sums over every word at every step.
    #[default]
    FullVocab,
    /// REINFORCE on the sampled word only.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Overrides `learning_rate` for MLE pretraining.
    pub mle_learning_rate: Option<f64>,
    /// Overrides `learning_rate` for evaluator updates.
    pub evaluator_learning_rate: Option<f64>,
    /// Overrides `learning_rate` for policy-gradient updates.
    pub pg_learning_rate: Option<f64>,
    /// Overrides `batch_size` for policy-gradient updates.
    pub pg_batch_size: Option<usize>,
    pub rollout_count: usize,
    pub t_max: usize,
    pub alpha: f64,
    pub beta: f64,
    pub pretrain_epochs_g: usize,
    pub pretrain_epochs_e: usize,
    pub adversarial_iters: usize,
    pub g_steps_per_iter: usize,
    pub e_steps_per_iter: usize,
    pub temperature: f64,
    pub noise_dim: usize,
    pub noise_sigma: f64,
    pub refs_per_image: usize,
    pub gen_per_image: usize,
    pub mism_per_image: usize,
    /// Only every `rollout_stride`-th step contributes to the policy gradient.
    pub rollout_stride: usize,
    /// Words below this policy probability get no rollouts and contribute
    /// zero gradient. Zero keeps the full sum.
    pub rollout_min_prob: f64,
    pub pg_mode: PolicyGradientMode,
    /// Subtracts the batch-mean reward in sampled mode.
    pub baseline: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            batch_size: 64,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Sgd,
            mle_learning_rate: None,
            evaluator_learning_rate: None,
            pg_learning_rate: None,
            pg_batch_size: None,
            rollout_count: 16,
            t_max: 16,
            alpha: 0.5,
            beta: 0.5,
            pretrain_epochs_g: 20,
            pretrain_epochs_e: 5,
            adversarial_iters: 100,
            g_steps_per_iter: 1,
            e_steps_per_iter: 1,
            temperature: 1.0,
            noise_dim: 16,
            noise_sigma: 1.0,
            refs_per_image: 2,
            gen_per_image: 2,
            mism_per_image: 2,
            rollout_stride: 1,
            rollout_min_prob: 0.0,
            pg_mode: PolicyGradientMode::FullVocab,
            baseline: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("rollout_count", self.rollout_count),
            ("t_max", self.t_max),
            ("refs_per_image", self.refs_per_image),
            ("gen_per_image", self.gen_per_image),
            ("mism_per_image", self.mism_per_image),
            ("rollout_stride", self.rollout_stride),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.pg_batch_size == Some(0) {
            return Err(Error::Config("pg_batch_size must be at least 1".into()));
        }
        for (name, v) in [
            ("learning_rate", Some(self.learning_rate)),
            ("mle_learning_rate", self.mle_learning_rate),
            ("evaluator_learning_rate", self.evaluator_learning_rate),
            ("pg_learning_rate", self.pg_learning_rate),
            ("temperature", Some(self.temperature)),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive")));
                }
            }
        }
        if !(self.noise_sigma >= 0.0) || !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config("noise_sigma, alpha and beta must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.rollout_min_prob) {
            return Err(Error::Config("rollout_min_prob must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn mle_lr(&self) -> f64 {
        self.mle_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn evaluator_lr(&self) -> f64 {
        self.evaluator_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn pg_lr(&self) -> f64 {
        self.pg_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn pg_batch(&self) -> usize {
        self.pg_batch_size.unwrap_or(self.batch_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.rollout_count, c.t_max), (64, 16, 16));
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!((c.pretrain_epochs_g, c.pretrain_epochs_e), (20, 5));
        assert_eq!((c.g_steps_per_iter, c.e_steps_per_iter), (1, 1));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c.batch_size = 4;
        c.learning_rate = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_toml_style_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"seed": 3, "optimizer": {"kind": "adam", "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.batch_size, 64);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
