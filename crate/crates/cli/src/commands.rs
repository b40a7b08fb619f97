use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use logloader::env::{ACT_DIM, OBS_DIM};
use logloader::eval::generalization::{default_suite, run_suite};
use logloader::eval::oracle::OracleController;
use logloader::eval::sweep::{run_sweep, HeatmapMetric, SweepSpec};
use logloader::eval::{evaluate_agent, evaluate_success_rate, EvalReport, Outcome, PolicyController};
use logloader::parallel::Parallelism;
use logloader::ppo::checkpoint;
use logloader::ppo::metrics::{write_event, MetricsWriter};
use logloader::ppo::{forwarder_trainer, Agent, TrainEvent};
use logloader::rewards::Arrangement;
use logloader::trajectory::{record_episode, write_record};
use logloader::{ConfigError, ForwarderEnv, Resolved};

use crate::manifest::{Invocation, RunDir};

fn create<P: AsRef<Path>>(path: P) -> Result<BufWriter<File>> {
    let path = path.as_ref();
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn env_of(r: &Resolved) -> ForwarderEnv {
    ForwarderEnv::new(r.chain.clone(), r.env.clone(), r.reward.clone())
}

pub fn parse_arrangement(s: &str) -> Result<Arrangement, ConfigError> {
    Arrangement::ALL
        .into_iter()
        .find(|a| a.name().eq_ignore_ascii_case(s) || a.label() == s)
        .ok_or_else(|| ConfigError::invalid("arrangements", format!("unknown arrangement `{s}`")))
}

fn load_agent(path: &Path) -> Result<Agent> {
    checkpoint::load_compatible(path, OBS_DIM, ACT_DIM)
        .with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn train(run: &mut RunDir, r: &Resolved, mode: Parallelism, quiet: bool) -> Result<()> {
    std::fs::create_dir_all(run.file("checkpoints"))?;
    run.add_artifact("metrics", "metrics.csv");
    run.add_artifact("events", "events.jsonl");
    run.add_artifact("checkpoint_latest", "checkpoints/latest.ckpt");
    run.add_artifact("checkpoint_best", "checkpoints/best.ckpt");
    run.add_artifact("checkpoint_final", "checkpoints/final.ckpt");
    run.save()?;

    let mut metrics = MetricsWriter::new(create(run.file("metrics.csv"))?)?;
    let mut events = create(run.file("events.jsonl"))?;
    let mut trainer = forwarder_trainer(r, mode);
    let total = r.curriculum.total_epochs();
    let mut best = f64::NEG_INFINITY;
    while trainer.epoch() < total {
        // On failure the previous epoch's checkpoints stay on disk untouched.
        let evs = trainer.run_epoch()?;
        for ev in &evs {
            write_event(&mut events, ev)?;
            match ev {
                TrainEvent::Epoch(m) => {
                    metrics.write(m)?;
                    if !quiet {
                        eprintln!(
                            "epoch {:>4}  stage {}  return {:>9.3}  success {:.3}  r1 {:.4}",
                            m.epoch, m.stage, m.mean_return, m.success_rate, m.r1_mean
                        );
                    }
                    if m.mean_return > best {
                        best = m.mean_return;
                        checkpoint::save(&trainer.agent, &run.file("checkpoints/best.ckpt"))?;
                    }
                }
                TrainEvent::StageTransition {
                    epoch,
                    from_stage,
                    to_stage,
                    ..
                } => {
                    if !quiet {
                        eprintln!("stage {from_stage} -> {to_stage} after epoch {epoch}");
                    }
                }
            }
        }
        events.flush()?;
        checkpoint::save(&trainer.agent, &run.file("checkpoints/latest.ckpt"))?;
    }
    checkpoint::save(&trainer.agent, &run.file("checkpoints/final.ckpt"))?;
    Ok(())
}

fn print_report(label: &str, rep: &EvalReport) {
    println!(
        "{label}: success rate {:.4} ({}/{}), mean return {:.3}, mean steps {:.1}",
        rep.success_rate, rep.successes, rep.trials, rep.mean_return, rep.mean_steps
    );
    for o in Outcome::ALL.iter().skip(1) {
        println!("  {:<20} {}", o.name(), rep.count(*o));
    }
}

pub fn eval(run: &mut RunDir, r: &Resolved, mode: Parallelism) -> Result<()> {
    let Invocation::Eval {
        checkpoint,
        oracle,
        trials,
        base_seed,
        generalization,
    } = run.manifest.invocation.clone()
    else {
        unreachable!("eval invocation");
    };
    let env = env_of(r);
    let agent = match (&checkpoint, oracle) {
        (Some(p), false) => Some(load_agent(p)?),
        (None, true) => None,
        _ => return Err(anyhow!("give exactly one of --checkpoint or --oracle")),
    };
    let chain = env.chain.clone();
    let report = match &agent {
        Some(a) => evaluate_agent(&env, a, trials, base_seed, mode),
        None => evaluate_success_rate(&env, || OracleController::new(&chain), trials, base_seed, mode),
    };
    print_report("nominal", &report);
    println!(
        "reference: {}/{} ({:.3})",
        report.reference_successes,
        report.reference_trials,
        report.reference_successes as f64 / report.reference_trials as f64
    );
    write_json(&run.file("report.json"), &report)?;
    run.add_artifact("report", "report.json");
    if generalization {
        let suite = default_suite();
        let cases = match &agent {
            Some(a) => run_suite(&env, &suite, || PolicyController { agent: a }, trials, base_seed, mode),
            None => run_suite(&env, &suite, || OracleController::new(&chain), trials, base_seed, mode),
        };
        for c in &cases {
            println!("{:<24} {:.4}", c.name, c.report.success_rate);
        }
        write_json(&run.file("generalization.json"), &cases)?;
        run.add_artifact("generalization", "generalization.json");
    }
    Ok(())
}

struct CellOutput {
    key: String,
    metrics: MetricsWriter<BufWriter<File>>,
    events: BufWriter<File>,
}

pub fn sweep(run: &mut RunDir, r: &Resolved, mode: Parallelism, quiet: bool) -> Result<()> {
    let Invocation::Sweep {
        arrangements,
        weights,
        seeds,
        total_epochs,
        eval_trials,
        eval_base_seed,
    } = run.manifest.invocation.clone()
    else {
        unreachable!("sweep invocation");
    };
    let spec = SweepSpec {
        arrangements: arrangements
            .iter()
            .map(|s| parse_arrangement(s))
            .collect::<Result<_, _>>()?,
        weights,
        seeds,
        total_epochs,
        eval_trials,
        eval_base_seed,
    };
    std::fs::create_dir_all(run.file("cells"))?;
    run.add_artifact("sweep", "sweep.json");
    run.add_artifact("heatmap_return", "heatmap_return.csv");
    run.add_artifact("heatmap_success", "heatmap_success.csv");
    run.add_artifact("cells", "cells");
    run.save()?;

    let root = run.path.clone();
    let mut current: Option<CellOutput> = None;
    let mut io_error: Option<anyhow::Error> = None;
    let result = run_sweep(
        r,
        &spec,
        mode,
        |cell| {
            if !quiet {
                match &cell.error {
                    None => eprintln!(
                        "{} w={} seed={}: final return {:.3}, success {:.3}",
                        cell.arrangement.name(),
                        cell.weight,
                        cell.seed,
                        cell.final_mean_return,
                        cell.success_rate
                    ),
                    Some(e) => eprintln!(
                        "{} w={} seed={}: FAILED {e}",
                        cell.arrangement.name(),
                        cell.weight,
                        cell.seed
                    ),
                }
            }
        },
        |cell, ev| {
            if io_error.is_some() {
                return;
            }
            let key = format!("{}_w{}_s{}", cell.arrangement.name(), cell.weight, cell.seed);
            let mut step = || -> Result<()> {
                if current.as_ref().is_none_or(|c| c.key != key) {
                    let dir = root.join("cells").join(&key);
                    std::fs::create_dir_all(&dir)?;
                    current = Some(CellOutput {
                        metrics: MetricsWriter::new(create(dir.join("metrics.csv"))?)?,
                        events: create(dir.join("events.jsonl"))?,
                        key: key.clone(),
                    });
                }
                let out = current.as_mut().expect("opened above");
                write_event(&mut out.events, ev)?;
                out.events.flush()?;
                if let TrainEvent::Epoch(m) = ev {
                    out.metrics.write(m)?;
                }
                Ok(())
            };
            if let Err(e) = step() {
                io_error = Some(e);
            }
        },
    );
    drop(current);
    if let Some(e) = io_error {
        return Err(e);
    }
    write_json(&run.file("sweep.json"), &result)?;
    result.write_heatmap_csv(create(run.file("heatmap_return.csv"))?, HeatmapMetric::FinalReturn)?;
    result.write_heatmap_csv(create(run.file("heatmap_success.csv"))?, HeatmapMetric::SuccessRate)?;
    if let (Some(a), Some(w), Some(v)) = (
        result.ordering.best_arrangement,
        result.ordering.best_weight,
        result.ordering.best_mean_return,
    ) {
        println!("best cell: {} w={w} (mean final return {v:.3})", a.name());
    }
    if result.partial {
        let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
        return Err(anyhow!("{failed} sweep cell(s) failed; partial grid written"));
    }
    Ok(())
}

pub fn demo(run: &mut RunDir, r: &Resolved) -> Result<()> {
    let Invocation::Demo {
        checkpoint,
        oracle,
        episodes,
        seed,
    } = run.manifest.invocation.clone()
    else {
        unreachable!("demo invocation");
    };
    let env = env_of(r);
    let agent = match (&checkpoint, oracle) {
        (Some(p), false) => Some(load_agent(p)?),
        (None, true) => None,
        _ => return Err(anyhow!("give exactly one of --checkpoint or --oracle")),
    };
    let path: PathBuf = run.file("trajectory.jsonl");
    let mut out = create(&path)?;
    let mut io_error = None;
    for ep in 0..episodes {
        let s = seed + ep as u64;
        let mut steps = 0u32;
        let mut sink = |rec: &logloader::trajectory::TrajectoryRecord| {
            steps = rec.step;
            if io_error.is_none() {
                io_error = write_record(&mut out, rec).err();
            }
        };
        let ok = match &agent {
            Some(a) => record_episode(&env, &mut PolicyController { agent: a }, ep, s, &mut sink),
            None => record_episode(&env, &mut OracleController::new(&env.chain), ep, s, &mut sink),
        };
        println!("episode {ep} (seed {s}): {} after {steps} steps", if ok { "success" } else { "failure" });
    }
    if let Some(e) = io_error {
        return Err(e.into());
    }
    out.flush()?;
    run.add_artifact("trajectory", "trajectory.jsonl");
    Ok(())
}
