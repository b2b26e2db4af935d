//! Learning procedures: MLE pretraining, Monte-Carlo rollout values, the
//! policy-gradient generator update, the evaluator update, the alternating
//! adversarial loop, and the fixed-generator evaluator baseline.

mod adversarial;
mod config;
mod mle;
mod policy;
mod report;
mod rollout;

pub use adversarial::{
    evaluator_gradient, evaluator_step, pretrain_evaluator, train_adversarial, train_e_ngan, EvaluatorDiagnostics,
};
pub use config::{PolicyGradientMode, TrainConfig};
pub use mle::{pretrain_mle, validation_nll};
pub use policy::{path_policy_gradient, policy_gradient, policy_gradient_step, PolicyDiagnostics, RolloutMode};
pub use report::{TrainRecord, TrainReport};
pub use rollout::{exact_future_reward, expected_future_reward, RewardEstimate};

/// Stream tags keeping each procedure's randomness independent.
pub(crate) mod tags {
    pub const MLE_SHUFFLE: u64 = 0x4d4c45;
    pub const MLE_NOISE: u64 = 0x4d4c46;
    pub const VAL_NOISE: u64 = 0x56414c;
    pub const E_PRETRAIN: u64 = 0x455052;
    pub const ADV_G: u64 = 0x414447;
    pub const ADV_E: u64 = 0x414445;
}
