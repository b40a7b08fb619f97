//! Kinematic forestry-forwarder log loading: a 9-joint crane MDP, staged
//! shaped rewards, a from-scratch PPO trainer, and success-rate evaluation.

pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod model;
pub mod parallel;
pub mod ppo;
pub mod rewards;
pub mod trajectory;

pub use config::{Config, Resolved};
pub use env::{ForwarderEnv, Observation, StepResult, VecEnv, WorldState};
pub use error::{CheckpointError, ConfigError, ModelError, PpoError, RewardError};
pub use model::KinematicChain;
