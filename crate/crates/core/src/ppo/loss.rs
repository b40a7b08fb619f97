//! Clipped-surrogate loss with its exact gradient.

use super::buffer::RolloutBuffer;
use super::policy::{log_prob, Agent};
use crate::parallel::{self, Parallelism};

/// Samples per gradient chunk. Chunk partial sums are reduced in index order,
/// so the result does not depend on thread scheduling.
pub const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    /// `-mean(min(ρA, clip(ρ)A))`
    pub policy_loss: f64,
    /// `mean((V - R)^2)`
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// `policy_loss + c_v value_loss - c_e entropy`
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
struct Partial {
    grad: Vec<f64>,
    policy: f64,
    value: f64,
    kl: f64,
    clipped: f64,
}

/// Loss and its gradient (laid out as [`Agent::num_params`]) over the
/// buffer entries `idx`.
pub fn loss_and_grad(
    agent: &Agent,
    buf: &RolloutBuffer,
    idx: &[usize],
    coef: &LossCoefficients,
    mode: Parallelism,
) -> (LossStats, Vec<f64>) {
    let n_params = agent.num_params();
    let n_pol = agent.policy.net.num_params();
    let act_dim = agent.act_dim();
    let chunks: Vec<&[usize]> = idx.chunks(GRAD_CHUNK).collect();
    let sigma: Vec<f64> = agent.policy.log_std.iter().map(|l| l.exp()).collect();

    let partials = parallel::map_range(mode, chunks.len(), |c| {
        let mut p = Partial {
            grad: vec![0.0; n_params],
            ..Partial::default()
        };
        let (g_pol, rest) = p.grad.split_at_mut(n_pol);
        let (g_ls, g_val) = rest.split_at_mut(act_dim);
        let mut d_out = vec![0.0; act_dim];
        for &i in chunks[c] {
            let obs = buf.obs_row(i);
            let a = buf.action_row(i);
            let adv = buf.advantages[i];
            let ret = buf.returns[i];

            let cache = agent.policy.net.forward_cached(obs);
            let mu: Vec<f64> = cache.output().iter().map(|o| o.tanh()).collect();
            let lp = log_prob(&mu, &agent.policy.log_std, a);
            let log_ratio = lp - buf.log_probs[i];
            let ratio = log_ratio.exp();
            let lo = 1.0 - coef.clip_ratio;
            let hi = 1.0 + coef.clip_ratio;
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(lo, hi) * adv;
            // Ties go to the unclipped branch, which carries the gradient.
            let use_unclipped = unclipped <= clipped;
            p.policy -= unclipped.min(clipped);
            p.kl += ratio - 1.0 - log_ratio;
            if !use_unclipped {
                p.clipped += 1.0;
            }

            if use_unclipped {
                // d(-ρA)/d logp = -ρA
                let d_lp = -unclipped;
                for k in 0..act_dim {
                    let diff = a[k] - mu[k];
                    let s2 = sigma[k] * sigma[k];
                    d_out[k] = d_lp * diff / s2 * (1.0 - mu[k] * mu[k]);
                    g_ls[k] += d_lp * (diff * diff / s2 - 1.0);
                }
                agent.policy.net.backward(&cache, &d_out, g_pol);
            }

            let vcache = agent.value.net.forward_cached(obs);
            let v = vcache.output()[0];
            p.value += (v - ret) * (v - ret);
            agent
                .value
                .net
                .backward(&vcache, &[2.0 * coef.value_coef * (v - ret)], g_val);
        }
        p
    });

    let mut grad = vec![0.0; n_params];
    let mut sums = Partial::default();
    for p in partials {
        for (g, pg) in grad.iter_mut().zip(&p.grad) {
            *g += pg;
        }
        sums.policy += p.policy;
        sums.value += p.value;
        sums.kl += p.kl;
        sums.clipped += p.clipped;
    }
    let n = idx.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    // Entropy gradient: d(-c_e H)/d log_std = -c_e per dimension.
    for k in 0..act_dim {
        grad[n_pol + k] -= coef.entropy_coef;
    }
    let entropy = agent.policy.entropy();
    let stats = LossStats {
        policy_loss: sums.policy / n,
        value_loss: sums.value / n,
        entropy,
        approx_kl: sums.kl / n,
        clip_fraction: sums.clipped / n,
        total: sums.policy / n + coef.value_coef * sums.value / n - coef.entropy_coef * entropy,
    };
    (stats, grad)
}

/// Forward-only total loss, for finite-difference checks.
pub fn total_loss(agent: &Agent, buf: &RolloutBuffer, idx: &[usize], coef: &LossCoefficients) -> f64 {
    let mut pol = 0.0;
    let mut val = 0.0;
    for &i in idx {
        let obs = buf.obs_row(i);
        let mu = agent.policy.mean(obs);
        let lp = log_prob(&mu, &agent.policy.log_std, buf.action_row(i));
        let ratio = (lp - buf.log_probs[i]).exp();
        let adv = buf.advantages[i];
        let c = ratio.clamp(1.0 - coef.clip_ratio, 1.0 + coef.clip_ratio);
        pol -= (ratio * adv).min(c * adv);
        let v = agent.value.value(obs);
        val += (v - buf.returns[i]).powi(2);
    }
    let n = idx.len().max(1) as f64;
    pol / n + coef.value_coef * val / n - coef.entropy_coef * agent.policy.entropy()
}
