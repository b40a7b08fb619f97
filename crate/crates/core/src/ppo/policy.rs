//! Diagonal-Gaussian policy, value network, and the agent bundling both
//! with the observation normalizer.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::Mlp;
use super::normalizer::RunningNorm;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Policy with mean `tanh(net(obs))` and a state-independent log std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        act_dim: usize,
        init_log_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(act_dim))
            .collect();
        GaussianPolicy {
            net: Mlp::new(&sizes, 0.01, rng),
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim],
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.net.forward(obs).into_iter().map(f64::tanh).collect()
    }

    /// Draw an action; returns the raw (unclipped) sample and its log-density.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64) {
        let mu = self.mean(obs);
        let raw: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let lp = log_prob(&mu, &self.log_std, &raw);
        (raw, lp)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

pub fn log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        ValueNet {
            net: Mlp::new(&sizes, 1.0, rng),
        }
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.net.forward(obs)[0]
    }
}

/// Everything a trained controller needs: networks plus the frozen
/// observation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    pub normalizer: RunningNorm,
}

impl Agent {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let policy = GaussianPolicy::new(obs_dim, hidden, act_dim, init_log_std, rng);
        let value = ValueNet::new(obs_dim, hidden, rng);
        Agent {
            policy,
            value,
            normalizer: RunningNorm::new(obs_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.act_dim()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        let s = &self.policy.net.sizes;
        s[1..s.len() - 1].to_vec()
    }

    /// Length of the flat gradient / optimizer vector:
    /// policy weights, log std, value weights.
    pub fn num_params(&self) -> usize {
        self.policy.net.num_params() + self.policy.log_std.len() + self.value.net.num_params()
    }

    pub fn param_segments_mut(&mut self) -> [&mut [f64]; 3] {
        [
            &mut self.policy.net.params,
            &mut self.policy.log_std,
            &mut self.value.net.params,
        ]
    }

    /// Deterministic action: the policy mean on the normalized observation.
    pub fn act_deterministic(&self, raw_obs: &[f64]) -> Vec<f64> {
        self.policy.mean(&self.normalizer.normalize(raw_obs))
    }
}
