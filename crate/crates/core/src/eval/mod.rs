//! Success-rate evaluation over independent seeded trials.

pub mod generalization;
pub mod oracle;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::env::{env_rng, Action, EnvConfig, ForwarderEnv, Observation, WorldState, ACT_DIM};
use crate::error::ConfigError;
use crate::parallel::{self, Parallelism};
use crate::ppo::Agent;

/// Success count over trial count reported for the trained reference
/// controller, kept for side-by-side reports.
pub const REFERENCE_SUCCESSES: u32 = 966;
pub const REFERENCE_TRIALS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub trials: u32,
    pub base_seed: u64,
}

impl EvalSection {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::invalid("eval.trials", "must be at least 1"));
        }
        Ok(())
    }
}

/// Something that picks an action each step of one episode.
pub trait Controller {
    fn reset(&mut self, _env: &ForwarderEnv, _state: &WorldState) {}
    fn act(&mut self, env: &ForwarderEnv, state: &WorldState, obs: &Observation) -> Action;
}

/// Deterministic policy-mean controller.
#[derive(Debug, Clone)]
pub struct PolicyController<'a> {
    pub agent: &'a Agent,
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, _env: &ForwarderEnv, _state: &WorldState, obs: &Observation) -> Action {
        let a = self.agent.act_deterministic(obs.as_slice());
        std::array::from_fn(|k| a[k].clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    TimeoutHolding,
    PushedOutOfReach,
    Dropped,
    NeverGrasped,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Success,
        Outcome::TimeoutHolding,
        Outcome::PushedOutOfReach,
        Outcome::Dropped,
        Outcome::NeverGrasped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::TimeoutHolding => "timeout_holding",
            Outcome::PushedOutOfReach => "pushed_out_of_reach",
            Outcome::Dropped => "dropped",
            Outcome::NeverGrasped => "never_grasped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: u32,
    pub final_target_distance: f64,
    pub ever_attached: bool,
    /// Undiscounted sum of `r1 + r2 + r3`.
    pub episode_return: f64,
}

/// Classify a finished episode. Checked in order: success, still holding,
/// log left the workable area, grasped at some point, never grasped.
pub fn classify(env: &ForwarderEnv, state: &WorldState, success: bool, ever_attached: bool) -> Outcome {
    if success {
        return Outcome::Success;
    }
    if state.attached {
        return Outcome::TimeoutHolding;
    }
    let p = state.log_position;
    let in_reach = env.config.spawn.contains_xy(p.x, p.y, 0.5) || env.chain.bed.over_footprint(p.x, p.y);
    if !in_reach {
        return Outcome::PushedOutOfReach;
    }
    if ever_attached {
        Outcome::Dropped
    } else {
        Outcome::NeverGrasped
    }
}

/// Run one episode from the reset drawn by `seed`.
pub fn run_trial(env: &ForwarderEnv, controller: &mut dyn Controller, seed: u64) -> TrialResult {
    let mut rng = env_rng(seed, 0);
    let mut state = env.reset(&mut rng);
    controller.reset(env, &state);
    let mut obs = env.build_observation(&state);
    let mut ever_attached = false;
    let mut episode_return = 0.0;
    loop {
        let a = controller.act(env, &state, &obs);
        let r = env.step(&mut state, &a);
        ever_attached |= state.attached;
        episode_return += r.reward_terms.total;
        obs = r.observation;
        if r.done {
            return TrialResult {
                seed,
                outcome: classify(env, &state, r.success, ever_attached),
                steps: state.step_count,
                final_target_distance: r.info.d_ltgt,
                ever_attached,
                episode_return,
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trials: u32,
    pub successes: u32,
    pub success_rate: f64,
    pub base_seed: u64,
    /// Outcome name to count, every outcome listed.
    pub outcomes: Vec<(String, u32)>,
    pub mean_steps: f64,
    pub mean_return: f64,
    pub reference_successes: u32,
    pub reference_trials: u32,
    pub results: Vec<TrialResult>,
}

impl EvalReport {
    pub fn from_results(base_seed: u64, results: Vec<TrialResult>) -> Self {
        let trials = results.len() as u32;
        let successes = results.iter().filter(|r| r.outcome == Outcome::Success).count() as u32;
        let outcomes = Outcome::ALL
            .iter()
            .map(|o| {
                (
                    o.name().to_string(),
                    results.iter().filter(|r| r.outcome == *o).count() as u32,
                )
            })
            .collect();
        let mean_of = |f: fn(&TrialResult) -> f64| {
            if trials > 0 {
                results.iter().map(f).sum::<f64>() / trials as f64
            } else {
                0.0
            }
        };
        let mean_steps = mean_of(|r| r.steps as f64);
        let mean_return = mean_of(|r| r.episode_return);
        EvalReport {
            trials,
            successes,
            success_rate: if trials > 0 { successes as f64 / trials as f64 } else { 0.0 },
            base_seed,
            outcomes,
            mean_steps,
            mean_return,
            reference_successes: REFERENCE_SUCCESSES,
            reference_trials: REFERENCE_TRIALS,
            results,
        }
    }

    pub fn count(&self, o: Outcome) -> u32 {
        self.outcomes
            .iter()
            .find(|(n, _)| n == o.name())
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }
}

/// Evaluate `trials` episodes with seeds `base_seed + i`. The factory builds
/// a fresh controller per trial, so trials are independent and can run in
/// parallel without changing results.
pub fn evaluate_success_rate<F, C>(
    env: &ForwarderEnv,
    make_controller: F,
    trials: u32,
    base_seed: u64,
    mode: Parallelism,
) -> EvalReport
where
    F: Fn() -> C + Sync + Send,
    C: Controller,
{
    let results = parallel::map_range(mode, trials as usize, |i| {
        let mut c = make_controller();
        run_trial(env, &mut c, base_seed + i as u64)
    });
    EvalReport::from_results(base_seed, results)
}

/// Evaluate a trained agent with its deterministic mean action.
pub fn evaluate_agent(env: &ForwarderEnv, agent: &Agent, trials: u32, base_seed: u64, mode: Parallelism) -> EvalReport {
    evaluate_success_rate(env, || PolicyController { agent }, trials, base_seed, mode)
}

/// Same environment with a different configuration.
pub fn env_with(env: &ForwarderEnv, config: EnvConfig) -> ForwarderEnv {
    env.with_config(config)
}

/// Zero-action controller.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdleController;

impl Controller for IdleController {
    fn act(&mut self, _env: &ForwarderEnv, _state: &WorldState, _obs: &Observation) -> Action {
        [0.0; ACT_DIM]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn env() -> ForwarderEnv {
        let r = Config::embedded_default().resolve().unwrap();
        ForwarderEnv::new(r.chain, r.env, r.reward)
    }

    #[test]
    fn idle_controller_never_grasps() {
        let env = env();
        let r = evaluate_success_rate(&env, || IdleController, 6, 100, Parallelism::Sequential);
        assert_eq!(r.trials, 6);
        assert_eq!(r.successes, 0);
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.count(Outcome::NeverGrasped), 6);
        assert!(r.results.iter().all(|t| t.steps == env.config.episode_length));
        assert_eq!(r.results[3].seed, 103);
    }

    #[test]
    fn classification_order() {
        let env = env();
        let mut s = env.reset(&mut env_rng(1, 0));
        assert_eq!(classify(&env, &s, true, true), Outcome::Success);
        s.attached = true;
        assert_eq!(classify(&env, &s, false, true), Outcome::TimeoutHolding);
        s.attached = false;
        assert_eq!(classify(&env, &s, false, true), Outcome::Dropped);
        assert_eq!(classify(&env, &s, false, false), Outcome::NeverGrasped);
        s.log_position.x = 30.0;
        assert_eq!(classify(&env, &s, false, true), Outcome::PushedOutOfReach);
    }

    #[test]
    fn sequential_and_parallel_reports_match() {
        let env = env();
        let a = evaluate_success_rate(&env, || IdleController, 4, 7, Parallelism::Sequential);
        let b = evaluate_success_rate(&env, || IdleController, 4, 7, Parallelism::Parallel);
        assert_eq!(a, b);
    }
}
