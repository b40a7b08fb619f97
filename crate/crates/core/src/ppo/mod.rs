//! Proximal policy optimization, written against plain `Vec<f64>` networks.

pub mod buffer;
pub mod checkpoint;
pub mod gae;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod normalizer;
pub mod optim;
pub mod policy;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub use optim::OptimizerKind;
pub use policy::Agent;
pub use train::{
    forwarder_trainer, train_forwarder, EpochMetrics, ForwarderVecEnv, SanityEnv, TrainEvent, TrainSummary, Trainer,
    Transition, VectorEnv,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub learning_rate: f64,
    pub rollout_horizon: usize,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden_sizes: Vec<usize>,
    pub init_log_std: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = ConfigError::invalid;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(inv("ppo.gamma", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(inv("ppo.lambda", "must be in [0, 1]"));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(inv("ppo.clip_ratio", "must be in (0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(inv("ppo.learning_rate", "must be positive"));
        }
        if self.rollout_horizon == 0 {
            return Err(inv("ppo.rollout_horizon", "must be at least 1"));
        }
        if self.update_epochs == 0 {
            return Err(inv("ppo.update_epochs", "must be at least 1"));
        }
        if self.minibatch_size == 0 {
            return Err(inv("ppo.minibatch_size", "must be at least 1"));
        }
        if !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return Err(inv("ppo.value_coef", "loss coefficients must be non-negative"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(inv("ppo.max_grad_norm", "must be positive"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(inv("ppo.hidden_sizes", "need at least one non-empty hidden layer"));
        }
        if !self.init_log_std.is_finite() {
            return Err(inv("ppo.init_log_std", "must be finite"));
        }
        Ok(())
    }
}
