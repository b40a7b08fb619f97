/// Rollout storage, time-major: entry `t * num_envs + e`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub num_envs: usize,
    /// Normalized observations the policy saw.
    pub obs: Vec<f64>,
    /// Raw observations, for updating the normalizer.
    pub raw_obs: Vec<f64>,
    /// Unclipped action samples.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, num_envs: usize, horizon: usize) -> Self {
        let n = num_envs * horizon;
        RolloutBuffer {
            obs_dim,
            act_dim,
            num_envs,
            obs: Vec::with_capacity(n * obs_dim),
            raw_obs: Vec::with_capacity(n * obs_dim),
            actions: Vec::with_capacity(n * act_dim),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn raw_obs_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.raw_obs.chunks_exact(self.obs_dim)
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }
}
