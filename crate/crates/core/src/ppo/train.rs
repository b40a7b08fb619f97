//! Rollout collection, PPO updates, and the curriculum-driven training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::gae::{compute_gae, normalize_advantages};
use super::loss::{loss_and_grad, LossCoefficients, LossStats};
use super::optim::{clip_grad_norm, Optimizer};
use super::policy::{log_prob, Agent};
use super::PpoConfig;
use crate::config::Resolved;
use crate::env::{Action, ForwarderEnv, VecEnv, ACT_DIM, OBS_DIM};
use crate::error::PpoError;
use crate::parallel::{self, Parallelism};
use crate::rewards::{advance_stage, stage_reward, Arrangement, CurriculumConfig, StageState};

/// What a vectorized environment reports for one env after one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Reward under the current curriculum stage.
    pub reward: f64,
    pub terms: [f64; 3],
    pub done: bool,
    pub success: bool,
}

/// A batch of auto-resetting environments the trainer can drive.
pub trait VectorEnv {
    fn num_envs(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Current observation of every env.
    fn observations(&self) -> Vec<Vec<f64>>;
    fn step(&mut self, actions: &[Vec<f64>]) -> Vec<Transition>;
    fn set_stage(&mut self, _stage: usize) {}
}

/// The forwarder batch with a curriculum stage selecting the reward.
#[derive(Debug, Clone)]
pub struct ForwarderVecEnv {
    pub inner: VecEnv,
    pub arrangement: Arrangement,
    pub stage: usize,
}

impl ForwarderVecEnv {
    pub fn new(env: ForwarderEnv, num_envs: usize, seed: u64, arrangement: Arrangement) -> Self {
        ForwarderVecEnv {
            inner: VecEnv::new(env, num_envs, seed),
            arrangement,
            stage: 0,
        }
    }
}

impl VectorEnv for ForwarderVecEnv {
    fn num_envs(&self) -> usize {
        self.inner.len()
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn act_dim(&self) -> usize {
        ACT_DIM
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let inner = &self.inner;
        parallel::map_range(inner.parallelism, inner.len(), |i| inner.observe(i).0.to_vec())
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Vec<Transition> {
        let acts: Vec<Action> = actions
            .iter()
            .map(|a| std::array::from_fn(|k| a[k]))
            .collect();
        let (arr, stage) = (self.arrangement, self.stage);
        self.inner
            .step(&acts)
            .into_iter()
            .map(|r| Transition {
                reward: stage_reward(&r.reward_terms, arr, stage).expect("stage within arrangement"),
                terms: [r.reward_terms.r1, r.reward_terms.r2, r.reward_terms.r3],
                done: r.done,
                success: r.success,
            })
            .collect()
    }

    fn set_stage(&mut self, stage: usize) {
        self.stage = stage;
    }
}

/// Toy task for pipeline checks: reward `-‖clip(a)‖²`, random observations,
/// fixed-length episodes. The optimum is the zero action.
#[derive(Debug, Clone)]
pub struct SanityEnv {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episode_length: u32,
    obs: Vec<Vec<f64>>,
    steps: Vec<u32>,
    rng: ChaCha8Rng,
}

impl SanityEnv {
    pub fn new(num_envs: usize, obs_dim: usize, act_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..num_envs)
            .map(|_| (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        SanityEnv {
            obs_dim,
            act_dim,
            episode_length: 16,
            obs,
            steps: vec![0; num_envs],
            rng,
        }
    }
}

impl VectorEnv for SanityEnv {
    fn num_envs(&self) -> usize {
        self.obs.len()
    }

    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        self.obs.clone()
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Vec<Transition> {
        let mut out = Vec::with_capacity(actions.len());
        for (i, a) in actions.iter().enumerate() {
            let r = -a.iter().map(|x| x.clamp(-1.0, 1.0).powi(2)).sum::<f64>();
            self.steps[i] += 1;
            let done = self.steps[i] >= self.episode_length;
            if done {
                self.steps[i] = 0;
            }
            for v in &mut self.obs[i] {
                *v = self.rng.random_range(-1.0..1.0);
            }
            out.push(Transition {
                reward: r,
                terms: [r, 0.0, 0.0],
                done,
                success: false,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: u32,
    pub stage: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub r1_mean: f64,
    pub r2_mean: f64,
    pub r3_mean: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrainEvent {
    Epoch(EpochMetrics),
    StageTransition {
        epoch: u32,
        from_stage: usize,
        to_stage: usize,
        best_return: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub agent: Agent,
    pub history: Vec<EpochMetrics>,
    pub transitions: Vec<TrainEvent>,
}

pub struct Trainer<E: VectorEnv> {
    pub env: E,
    pub agent: Agent,
    pub config: PpoConfig,
    pub curriculum: CurriculumConfig,
    pub parallelism: Parallelism,
    optimizer: Optimizer,
    stage: StageState<Agent>,
    sample_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    epoch: u32,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

impl<E: VectorEnv> Trainer<E> {
    pub fn new(env: E, config: PpoConfig, curriculum: CurriculumConfig) -> Self {
        let mut init_rng = stream(config.seed, 0);
        let agent = Agent::new(
            env.obs_dim(),
            env.act_dim(),
            &config.hidden_sizes,
            config.init_log_std,
            &mut init_rng,
        );
        Self::with_agent(env, agent, config, curriculum)
    }

    pub fn with_agent(mut env: E, agent: Agent, config: PpoConfig, curriculum: CurriculumConfig) -> Self {
        env.set_stage(0);
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, agent.num_params());
        Trainer {
            sample_rng: stream(config.seed, 1),
            shuffle_rng: stream(config.seed, 2),
            env,
            agent,
            config,
            curriculum,
            parallelism: Parallelism::default(),
            optimizer,
            stage: StageState::default(),
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn current_stage(&self) -> usize {
        self.stage.current_stage
    }

    fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            clip_ratio: self.config.clip_ratio,
            value_coef: self.config.value_coef,
            entropy_coef: self.config.entropy_coef,
        }
    }

    /// Collect one rollout with the current policy.
    pub fn collect_rollout(&mut self) -> Result<(RolloutBuffer, RolloutStats), PpoError> {
        let n = self.env.num_envs();
        let horizon = self.config.rollout_horizon;
        let (od, ad) = (self.env.obs_dim(), self.env.act_dim());
        let mut buf = RolloutBuffer::new(od, ad, n, horizon);
        let mut stats = RolloutStats {
            env_returns: vec![0.0; n],
            ..RolloutStats::default()
        };
        let agent = &self.agent;
        let mode = self.parallelism;
        for _ in 0..horizon {
            let raw = self.env.observations();
            for row in &raw {
                if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                    return Err(PpoError::NonFiniteObservation(j));
                }
            }
            let normed: Vec<Vec<f64>> = raw.iter().map(|o| agent.normalizer.normalize(o)).collect();
            let heads = parallel::map_range(mode, n, |e| {
                (agent.policy.mean(&normed[e]), agent.value.value(&normed[e]))
            });
            let mut actions = Vec::with_capacity(n);
            for (e, (mu, v)) in heads.iter().enumerate() {
                let a: Vec<f64> = mu
                    .iter()
                    .zip(&agent.policy.log_std)
                    .map(|(m, ls)| {
                        let z: f64 = self.sample_rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect();
                buf.log_probs.push(log_prob(mu, &agent.policy.log_std, &a));
                buf.values.push(*v);
                buf.obs.extend(&normed[e]);
                buf.raw_obs.extend(&raw[e]);
                buf.actions.extend(&a);
                actions.push(a.iter().map(|x| x.clamp(-1.0, 1.0)).collect::<Vec<_>>());
            }
            let trans = self.env.step(&actions);
            for (e, t) in trans.iter().enumerate() {
                buf.rewards.push(t.reward);
                buf.dones.push(t.done);
                stats.env_returns[e] += t.reward;
                for k in 0..3 {
                    stats.term_sums[k] += t.terms[k];
                }
                if t.done {
                    stats.episodes += 1;
                    if t.success {
                        stats.successes += 1;
                    }
                }
            }
            stats.steps += n as u64;
        }
        let raw = self.env.observations();
        let last: Vec<f64> = parallel::map_range(mode, n, |e| {
            agent.value.value(&agent.normalizer.normalize(&raw[e]))
        });
        let (mut adv, ret) = compute_gae(
            &buf.rewards,
            &buf.values,
            &buf.dones,
            &last,
            n,
            self.config.gamma,
            self.config.lambda,
        );
        normalize_advantages(&mut adv);
        buf.advantages = adv;
        buf.returns = ret;
        Ok((buf, stats))
    }

    /// Minibatch PPO epochs over a collected buffer.
    pub fn update(&mut self, buf: &RolloutBuffer) -> Result<LossStats, PpoError> {
        let coef = self.coefficients();
        let mut idx: Vec<usize> = (0..buf.len()).collect();
        let mb = self.config.minibatch_size.min(buf.len()).max(1);
        let mut last = LossStats::default();
        let mut acc = LossStats::default();
        let mut count = 0.0;
        for _ in 0..self.config.update_epochs {
            idx.shuffle(&mut self.shuffle_rng);
            for chunk in idx.chunks(mb) {
                let (stats, mut grad) = loss_and_grad(&self.agent, buf, chunk, &coef, self.parallelism);
                if !stats.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(PpoError::NonFinite {
                        what: "loss".into(),
                        epoch: self.epoch as usize + 1,
                    });
                }
                clip_grad_norm(&mut grad, self.config.max_grad_norm);
                self.optimizer.step(&mut self.agent.param_segments_mut(), &grad);
                self.agent.policy.clamp_log_std();
                acc.policy_loss += stats.policy_loss;
                acc.value_loss += stats.value_loss;
                acc.approx_kl += stats.approx_kl;
                acc.clip_fraction += stats.clip_fraction;
                count += 1.0;
                last = stats;
            }
        }
        if count > 0.0 {
            last.policy_loss = acc.policy_loss / count;
            last.value_loss = acc.value_loss / count;
            last.approx_kl = acc.approx_kl / count;
            last.clip_fraction = acc.clip_fraction / count;
        }
        last.entropy = self.agent.policy.entropy();
        Ok(last)
    }

    /// One full epoch: rollout, normalizer update, PPO update, curriculum step.
    pub fn run_epoch(&mut self) -> Result<Vec<TrainEvent>, PpoError> {
        let (buf, stats) = self.collect_rollout()?;
        self.agent.normalizer.update(buf.raw_obs_rows());
        let loss = self.update(&buf)?;
        self.epoch += 1;
        let n = stats.env_returns.len().max(1) as f64;
        let steps = stats.steps.max(1) as f64;
        let metrics = EpochMetrics {
            epoch: self.epoch,
            stage: self.stage.current_stage,
            mean_return: stats.env_returns.iter().sum::<f64>() / n,
            success_rate: if stats.episodes > 0 {
                stats.successes as f64 / stats.episodes as f64
            } else {
                0.0
            },
            r1_mean: stats.term_sums[0] / steps,
            r2_mean: stats.term_sums[1] / steps,
            r3_mean: stats.term_sums[2] / steps,
            policy_loss: loss.policy_loss,
            value_loss: loss.value_loss,
            entropy: loss.entropy,
            approx_kl: loss.approx_kl,
            clip_fraction: loss.clip_fraction,
            episodes: stats.episodes,
        };
        let mut events = vec![TrainEvent::Epoch(metrics.clone())];
        let state = std::mem::take(&mut self.stage);
        let (next, transition) = advance_stage(state, &self.curriculum, metrics.mean_return, &self.agent);
        self.stage = next;
        if let Some(t) = transition {
            if let Some(best) = t.restore {
                self.agent = best;
            }
            self.optimizer.reset();
            self.env.set_stage(t.to_stage);
            events.push(TrainEvent::StageTransition {
                epoch: self.epoch,
                from_stage: t.from_stage,
                to_stage: t.to_stage,
                best_return: t.best_return,
            });
        }
        Ok(events)
    }

    /// Train for the curriculum's total budget, reporting each event.
    pub fn train(mut self, mut on_event: impl FnMut(&TrainEvent)) -> Result<TrainSummary, PpoError> {
        let total = self.curriculum.total_epochs();
        let mut history = Vec::with_capacity(total as usize);
        let mut transitions = Vec::new();
        while self.epoch < total {
            for ev in self.run_epoch()? {
                on_event(&ev);
                match ev {
                    TrainEvent::Epoch(m) => history.push(m),
                    t => transitions.push(t),
                }
            }
        }
        Ok(TrainSummary {
            agent: self.agent,
            history,
            transitions,
        })
    }
}

/// Trainer for the forwarder task as configured: `resolved.env.num_envs`
/// environments seeded by `resolved.env.seed`, curriculum and PPO settings
/// from the same config.
pub fn forwarder_trainer(resolved: &Resolved, parallelism: Parallelism) -> Trainer<ForwarderVecEnv> {
    let env = ForwarderEnv::new(resolved.chain.clone(), resolved.env.clone(), resolved.reward.clone());
    let mut venv = ForwarderVecEnv::new(
        env,
        resolved.env.num_envs,
        resolved.env.seed,
        resolved.curriculum.arrangement,
    );
    venv.inner.parallelism = parallelism;
    let mut trainer = Trainer::new(venv, resolved.ppo.clone(), resolved.curriculum.clone());
    trainer.parallelism = parallelism;
    trainer
}

/// Run [`forwarder_trainer`] for the full curriculum budget.
pub fn train_forwarder(
    resolved: &Resolved,
    parallelism: Parallelism,
    on_event: impl FnMut(&TrainEvent),
) -> Result<TrainSummary, PpoError> {
    forwarder_trainer(resolved, parallelism).train(on_event)
}

#[derive(Debug, Clone, Default)]
pub struct RolloutStats {
    pub env_returns: Vec<f64>,
    pub term_sums: [f64; 3],
    pub episodes: u64,
    pub successes: u64,
    pub steps: u64,
}
