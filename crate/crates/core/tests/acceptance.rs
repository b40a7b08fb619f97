//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without a test harness so the lines always reach stdout.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use logloader::env::{env_rng, ACT_DIM, OBS_DIM};
use logloader::eval::evaluate_success_rate;
use logloader::eval::oracle::OracleController;
use logloader::parallel::Parallelism;
use logloader::ppo::buffer::RolloutBuffer;
use logloader::ppo::gae::compute_gae;
use logloader::ppo::loss::{loss_and_grad, LossCoefficients};
use logloader::ppo::metrics::MetricsWriter;
use logloader::ppo::{train_forwarder, Agent, EpochMetrics};
use logloader::rewards::{proximity_score, reward_terms, Arrangement, CurriculumConfig, RewardInputs};
use logloader::{Config, ForwarderEnv, Resolved};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn env_of(r: &Resolved) -> ForwarderEnv {
    ForwarderEnv::new(r.chain.clone(), r.env.clone(), r.reward.clone())
}

fn fk_oracle() -> Outcome {
    let config = Config::embedded_default();
    let chain = config.model.build().unwrap();
    let limits = common::oracle_limits(&config.model);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q: [f64; 9] = std::array::from_fn(|i| rng.random_range(limits[i].0..=limits[i].1));
        worst = worst.max(common::fk_error(&chain, &config.model, &q));
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-9 && t < Duration::from_secs(5),
        format!("1000 configs, max error {worst:.2e} (< 1e-9), {:.2} s (< 5 s)", secs(t)),
    )
}

fn limit_fuzz() -> Outcome {
    let config = Config::embedded_default();
    let r = config.resolve().unwrap();
    let env = env_of(&r);
    let limits = common::oracle_limits(&config.model);
    let mut rng = env_rng(77, 0);
    let mut action_rng = ChaCha8Rng::seed_from_u64(78);
    let mut state = env.reset(&mut rng);
    let mut violations = 0u64;
    let mut episodes = 0u64;
    let steps = 100_000;
    for _ in 0..steps {
        // Mostly saturated commands, plus out-of-range values the env must clamp.
        let a: [f64; ACT_DIM] = std::array::from_fn(|_| match action_rng.random_range(0..4) {
            0 => -1.0,
            1 => 1.0,
            2 => action_rng.random_range(-5.0..5.0),
            _ => action_rng.random_range(-1.0..1.0),
        });
        let res = env.step(&mut state, &a);
        for (i, &(lo, hi)) in limits.iter().enumerate() {
            let v = state.joints.q[i];
            if !(v >= lo && v <= hi) {
                violations += 1;
            }
        }
        if res.done {
            episodes += 1;
            state = env.reset(&mut rng);
        }
    }
    outcome(
        violations == 0,
        format!("{steps} steps over {episodes} episodes, {violations} out-of-limit joint values"),
    )
}

fn reward_analytics() -> Outcome {
    let mut notes = Vec::new();
    let prox_ok = proximity_score(0.0) == 1.0 && proximity_score(1.0) == 0.5 && proximity_score(3.0) == 0.1;
    notes.push(format!("proximity exact: {prox_ok}"));

    // Cubic weight scaling on attached states visited by the oracle.
    let r = Config::embedded_default().resolve().unwrap();
    let env = env_of(&r);
    let mut oracle = OracleController::new(&env.chain);
    let mut state = env.reset(&mut env_rng(r.eval.base_seed, 0));
    logloader::eval::Controller::reset(&mut oracle, &env, &state);
    let mut obs = env.build_observation(&state);
    let mut attached_states = 0;
    let mut ratio_ok = true;
    let w = r.reward.weight;
    let mut doubled = r.reward.clone();
    doubled.weight = 2.0 * w;
    loop {
        let a = logloader::eval::Controller::act(&mut oracle, &env, &state, &obs);
        let res = env.step(&mut state, &a);
        obs = res.observation;
        if state.attached {
            attached_states += 1;
            let inputs = env.reward_inputs(&state);
            let r3w = reward_terms(&inputs, &r.reward).r3;
            let r32w = reward_terms(&inputs, &doubled).r3;
            ratio_ok &= r3w > 0.0 && r32w / r3w == 8.0;
        }
        if res.done {
            break;
        }
    }
    ratio_ok &= attached_states > 0;
    notes.push(format!("r3(2w)/r3(w) == 8 on {attached_states} attached states: {ratio_ok}"));

    // r2 along the vertical ray under the unload point, held log.
    let unl = r.chain.bed.unload_point;
    let grid = 100;
    let r2: Vec<f64> = (0..grid)
        .map(|k| {
            let z = unl.z * k as f64 / grid as f64;
            let inputs = RewardInputs {
                d_log_grapple: 0.0,
                d_log_unload: unl.z - z,
                d_log_target: 1.0,
                log_z: z,
                log_vz: 0.0,
                attached: true,
            };
            reward_terms(&inputs, &r.reward).r2
        })
        .collect();
    let mono = r2.windows(2).all(|p| p[1] > p[0]);
    notes.push(format!("r2 strictly increasing over {grid} heights: {mono}"));
    outcome(prox_ok && ratio_ok && mono, notes.join("; "))
}

fn gae_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let len = rng.random_range(1..=5);
        let gamma = rng.random_range(0.0..1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let done = rng.random_bool(0.5);
        let last = rng.random_range(-5.0..5.0);
        let mut dones = vec![false; len];
        dones[len - 1] = done;
        let (adv, ret) = compute_gae(&rewards, &values, &dones, &[last], 1, gamma, lambda);
        let want = common::gae_brute_force(&rewards, &values, done, last, gamma, lambda);
        for t in 0..len {
            worst = worst.max((adv[t] - want[t]).abs());
            worst = worst.max((ret[t] - (want[t] + values[t])).abs());
        }
    }
    outcome(worst < 1e-10, format!("500 episodes of length 1-5, max error {worst:.2e} (< 1e-10)"))
}

/// Random small agent and a batch drawn from it. `old_logp_spread` shifts the
/// behavior log-probs so some ratios leave the clip interval.
fn grad_fixture(seed: u64, old_logp_spread: f64) -> (Agent, RolloutBuffer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Agent::new(OBS_DIM, ACT_DIM, &[16, 16], -0.3, &mut rng);
    for p in agent
        .policy
        .net
        .params
        .iter_mut()
        .chain(agent.value.net.params.iter_mut())
    {
        *p = rng.random_range(-0.4..0.4);
    }
    for ls in &mut agent.policy.log_std {
        *ls = rng.random_range(-1.0..0.3);
    }
    let n = 48;
    let mut buf = RolloutBuffer::new(OBS_DIM, ACT_DIM, 1, n);
    for _ in 0..n {
        let obs: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (a, lp) = agent.policy.sample(&obs, &mut rng);
        buf.obs.extend(&obs);
        buf.actions.extend(&a);
        buf.log_probs.push(lp + old_logp_spread * rng.random_range(-1.0..1.0));
        buf.advantages.push(rng.random_range(-2.0..2.0));
        buf.returns.push(rng.random_range(-2.0..2.0));
    }
    (agent, buf)
}

struct Params<'a> {
    sizes_pol: &'a [usize],
    sizes_val: &'a [usize],
    n_pol: usize,
    act: usize,
}

impl Params<'_> {
    fn split<'b>(&self, theta: &'b [f64]) -> (&'b [f64], &'b [f64], &'b [f64]) {
        let (pol, rest) = theta.split_at(self.n_pol);
        let (ls, val) = rest.split_at(self.act);
        (pol, ls, val)
    }
}

fn flat(agent: &Agent) -> Vec<f64> {
    let mut v = agent.policy.net.params.clone();
    v.extend(&agent.policy.log_std);
    v.extend(&agent.value.net.params);
    v
}

/// Max relative error of the analytic gradient on `range` against central
/// differences of `f`.
fn max_rel_error(
    analytic: &[f64],
    theta: &mut [f64],
    range: std::ops::Range<usize>,
    f: impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in range {
        let fd = common::central_difference(theta, i, 1e-5, &f);
        worst = worst.max(common::relative_error(analytic[i], fd, 1e-6));
    }
    worst
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    // Log-probability: with A = -1 and the behavior log-prob equal to the
    // current one, the unclipped surrogate's gradient is exactly ∇ mean log π.
    let (agent, mut buf) = grad_fixture(5, 0.0);
    let n = buf.len();
    for i in 0..n {
        let obs = buf.obs_row(i).to_vec();
        let mu = agent.policy.mean(&obs);
        buf.log_probs[i] = logloader::ppo::policy::log_prob(&mu, &agent.policy.log_std, buf.action_row(i));
        buf.advantages[i] = -1.0;
    }
    let sizes_pol = agent.policy.net.sizes.clone();
    let sizes_val = agent.value.net.sizes.clone();
    let p = Params {
        sizes_pol: &sizes_pol,
        sizes_val: &sizes_val,
        n_pol: agent.policy.net.num_params(),
        act: ACT_DIM,
    };
    let coef = LossCoefficients {
        clip_ratio: f64::INFINITY,
        value_coef: 0.0,
        entropy_coef: 0.0,
    };
    let idx: Vec<usize> = (0..n).collect();
    let (_, g) = loss_and_grad(&agent, &buf, &idx, &coef, Parallelism::Sequential);
    let mut theta = flat(&agent);
    let mean_logp = |th: &[f64]| {
        let (pol, ls, _) = p.split(th);
        (0..n)
            .map(|i| {
                let mu: Vec<f64> = common::mlp_forward(p.sizes_pol, pol, buf.obs_row(i))
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                common::gaussian_log_density(&mu, ls, buf.action_row(i))
            })
            .sum::<f64>()
            / n as f64
    };
    let e_lp = max_rel_error(&g, &mut theta, 0..p.n_pol + p.act, mean_logp);
    ok &= e_lp < 1e-4;
    notes.push(format!("log-prob {e_lp:.1e}"));

    // Value loss alone.
    let (agent, mut buf) = grad_fixture(6, 0.0);
    buf.advantages.iter_mut().for_each(|a| *a = 0.0);
    let coef = LossCoefficients {
        clip_ratio: 0.2,
        value_coef: 1.0,
        entropy_coef: 0.0,
    };
    let (_, g) = loss_and_grad(&agent, &buf, &idx, &coef, Parallelism::Sequential);
    let mut theta = flat(&agent);
    let start_val = p.n_pol + p.act;
    let value_loss = |th: &[f64]| {
        let (_, _, val) = p.split(th);
        (0..n)
            .map(|i| {
                let v = common::mlp_forward(p.sizes_val, val, buf.obs_row(i))[0];
                (v - buf.returns[i]).powi(2)
            })
            .sum::<f64>()
            / n as f64
    };
    let total = theta.len();
    let e_v = max_rel_error(&g, &mut theta, start_val..total, value_loss);
    ok &= e_v < 1e-4;
    notes.push(format!("value loss {e_v:.1e}"));

    // Full clipped objective with entropy bonus, some samples clipped.
    let (agent, buf) = grad_fixture(7, 0.5);
    let coef = LossCoefficients {
        clip_ratio: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    let (stats, g) = loss_and_grad(&agent, &buf, &idx, &coef, Parallelism::Sequential);
    let mut theta = flat(&agent);
    let objective = |th: &[f64]| {
        let (pol, ls, val) = p.split(th);
        let mut policy = 0.0;
        let mut value = 0.0;
        for i in 0..n {
            let mu: Vec<f64> = common::mlp_forward(p.sizes_pol, pol, buf.obs_row(i))
                .into_iter()
                .map(f64::tanh)
                .collect();
            let ratio = (common::gaussian_log_density(&mu, ls, buf.action_row(i)) - buf.log_probs[i]).exp();
            let a = buf.advantages[i];
            policy += -(ratio * a).min(ratio.clamp(0.8, 1.2) * a);
            let v = common::mlp_forward(p.sizes_val, val, buf.obs_row(i))[0];
            value += (v - buf.returns[i]).powi(2);
        }
        let entropy: f64 = ls
            .iter()
            .map(|l| l + 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln()))
            .sum();
        policy / n as f64 + 0.5 * value / n as f64 - 0.01 * entropy
    };
    let total = theta.len();
    let e_s = max_rel_error(&g, &mut theta, 0..total, objective);
    let exercised = stats.clip_fraction > 0.0 && stats.clip_fraction < 1.0;
    ok &= e_s < 1e-4 && exercised;
    notes.push(format!(
        "clipped surrogate {e_s:.1e} (clip fraction {:.2})",
        stats.clip_fraction
    ));

    let t = start.elapsed();
    ok &= t < Duration::from_secs(30);
    outcome(
        ok,
        format!(
            "hidden [16, 16], max relative error: {} (< 1e-4); {:.2} s (< 30 s)",
            notes.join(", "),
            secs(t)
        ),
    )
}

fn oracle_gate() -> Outcome {
    let r = Config::embedded_default().resolve().unwrap();
    let env = env_of(&r);
    let chain = env.chain.clone();
    let start = Instant::now();
    let report = evaluate_success_rate(
        &env,
        || OracleController::new(&chain),
        256,
        r.eval.base_seed,
        Parallelism::default(),
    );
    let t = start.elapsed();
    outcome(
        report.success_rate >= 0.9 && t < Duration::from_secs(120),
        format!(
            "{}/{} = {:.3} (>= 0.9), {:.1} s (< 120 s)",
            report.successes,
            report.trials,
            report.success_rate,
            secs(t)
        ),
    )
}

fn metrics_csv(history: &[EpochMetrics]) -> Vec<u8> {
    let mut w = MetricsWriter::new(Vec::new()).unwrap();
    for m in history {
        w.write(m).unwrap();
    }
    w.into_inner()
}

fn determinism() -> Outcome {
    let mut config = Config::embedded_default();
    config.env.num_envs = 16;
    config.curriculum = CurriculumConfig::new(Arrangement::GraspThenPlace, vec![1, 2]);
    let r = config.resolve().unwrap();
    let run = |mode| metrics_csv(&train_forwarder(&r, mode, |_| {}).unwrap().history);
    let a = run(Parallelism::default());
    let b = run(Parallelism::default());
    let seq = run(Parallelism::Sequential);
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 1;
    outcome(
        a == b && a == seq && rows == 3,
        format!(
            "3 epochs x 16 envs: repeat identical {}, sequential identical {}, {} bytes",
            a == b,
            a == seq,
            a.len()
        ),
    )
}

struct SeedRuns {
    seed: u64,
    gtp: Vec<EpochMetrics>,
    flat: Vec<EpochMetrics>,
}

fn desk_runs() -> (Vec<SeedRuns>, Duration) {
    let start = Instant::now();
    let mut out = Vec::new();
    for seed in [1u64, 2, 3] {
        let run = |arr: Arrangement| {
            let mut c = Config::desk_preset();
            c.curriculum = CurriculumConfig::with_total(arr, 60);
            c.ppo.seed = seed;
            c.env.seed = seed;
            let r = c.resolve().unwrap();
            train_forwarder(&r, Parallelism::default(), |_| {}).unwrap().history
        };
        out.push(SeedRuns {
            seed,
            gtp: run(Arrangement::GraspThenPlace),
            flat: run(Arrangement::Flat),
        });
    }
    (out, start.elapsed())
}

fn curriculum_direction(runs: &[SeedRuns], t: Duration) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for s in runs {
        let g = s.gtp.last().unwrap().mean_return;
        let f = s.flat.last().unwrap().mean_return;
        if g >= f {
            wins += 1;
        }
        parts.push(format!("seed {}: {g:.2} vs {f:.2}", s.seed));
    }
    outcome(
        wins >= 2 && t < Duration::from_secs(30 * 60),
        format!(
            "GRASP_THEN_PLACE >= FLAT final return in {wins}/3 ({}); {:.0} s (< 1800 s)",
            parts.join(", "),
            secs(t)
        ),
    )
}

fn learning_signal(runs: &[SeedRuns]) -> Outcome {
    let stage0 = Arrangement::GraspThenPlace.split_budget(60)[0] as usize;
    let mut ok = 0;
    let mut parts = Vec::new();
    for s in runs {
        let first = s.gtp[0].r1_mean;
        let end = s.gtp[stage0 - 1].r1_mean;
        if end >= 1.5 * first {
            ok += 1;
        }
        parts.push(format!("seed {}: {first:.4} -> {end:.4} ({:+.0}%)", s.seed, 100.0 * (end / first - 1.0)));
    }
    outcome(
        ok >= 2,
        format!(
            "r1 epoch 1 -> epoch {stage0} up >= 50% in {ok}/3 ({})",
            parts.join(", ")
        ),
    )
}

fn report(name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag}  {name}: {}", o.detail);
    std::io::stdout().flush().ok();
}

fn main() {
    // Positional arguments filter criteria by substring, as with the default
    // test harness; flags such as `--nocapture` are ignored.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut all = true;
    let mut run = |name: &str, f: &dyn Fn() -> Outcome| {
        if !selected(name) {
            return;
        }
        let o = f();
        report(name, &o);
        all &= o.pass;
    };
    run("fk_oracle", &fk_oracle);
    run("limit_safety_fuzz", &limit_fuzz);
    run("reward_analytics", &reward_analytics);
    run("gae_oracle", &gae_oracle);
    run("gradient_checks", &gradient_checks);
    run("oracle_solvability", &oracle_gate);
    run("determinism", &determinism);
    if selected("curriculum_direction") || selected("learning_signal") {
        let (runs, t) = desk_runs();
        run("curriculum_direction", &|| curriculum_direction(&runs, t));
        run("learning_signal", &|| learning_signal(&runs));
    }
    if !all {
        std::process::exit(1);
    }
}
