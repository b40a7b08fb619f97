//! Generalized advantage estimation.

/// Advantages and returns for a batch stored time-major (`t * num_envs + e`).
/// `dones[t*n+e]` marks that the transition at `t` ended an episode, in which
/// case nothing is bootstrapped across it. `last_values` are the value
/// estimates of the observations following the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    num_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let len = rewards.len();
    assert_eq!(values.len(), len);
    assert_eq!(dones.len(), len);
    assert_eq!(last_values.len(), num_envs);
    assert!(num_envs > 0 && len % num_envs == 0, "time-major batch");
    let horizon = len / num_envs;
    let mut adv = vec![0.0; len];
    for e in 0..num_envs {
        let mut next_adv = 0.0;
        let mut next_value = last_values[e];
        for t in (0..horizon).rev() {
            let i = t * num_envs + e;
            let cont = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * cont - values[i];
            next_adv = delta + gamma * lambda * cont * next_adv;
            adv[i] = next_adv;
            next_value = values[i];
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Single terminated episode: no bootstrap after the last step.
pub fn episode_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut dones = vec![false; rewards.len()];
    if let Some(d) = dones.last_mut() {
        *d = true;
    }
    compute_gae(rewards, values, &dones, &[0.0], 1, gamma, lambda).0
}

/// Shift to zero mean and unit population std; left alone when the spread
/// is numerically zero.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 {
        return;
    }
    for a in adv {
        *a = (*a - mean) / std;
    }
}
