//! Per-step episode records streamed as JSON lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::env::{env_rng, ForwarderEnv, WorldState};
use crate::eval::Controller;
use crate::model::JointVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode: u32,
    pub step: u32,
    pub q: JointVector,
    /// Joint goals issued this step.
    pub u: JointVector,
    pub p_l: [f64; 3],
    pub p_gb: [f64; 3],
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub attached: bool,
    pub success: bool,
    pub done: bool,
}

fn arr(v: &nalgebra::Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Roll out one episode from the reset drawn by `seed`, calling `sink` with
/// each step's record. Returns whether the episode succeeded.
pub fn record_episode(
    env: &ForwarderEnv,
    controller: &mut dyn Controller,
    episode: u32,
    seed: u64,
    mut sink: impl FnMut(&TrajectoryRecord),
) -> bool {
    let mut rng = env_rng(seed, 0);
    let mut state: WorldState = env.reset(&mut rng);
    controller.reset(env, &state);
    let mut obs = env.build_observation(&state);
    loop {
        let a = controller.act(env, &state, &obs);
        let r = env.step(&mut state, &a);
        sink(&TrajectoryRecord {
            episode,
            step: state.step_count,
            q: state.joints.q,
            u: state.targets,
            p_l: arr(&state.log_position),
            p_gb: arr(&state.poses.p_gb()),
            r1: r.reward_terms.r1,
            r2: r.reward_terms.r2,
            r3: r.reward_terms.r3,
            attached: state.attached,
            success: r.success,
            done: r.done,
        });
        obs = r.observation;
        if r.done {
            return r.success;
        }
    }
}

pub fn write_record(w: &mut impl Write, rec: &TrajectoryRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, rec)?;
    w.write_all(b"\n")
}

pub fn read_records(r: impl BufRead) -> std::io::Result<Vec<TrajectoryRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l).map_err(std::io::Error::other)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::eval::IdleController;

    #[test]
    fn records_round_trip_and_end_with_done() {
        let r = Config::embedded_default().resolve().unwrap();
        let mut cfg = r.env.clone();
        cfg.episode_length = 12;
        let env = ForwarderEnv::new(r.chain, cfg, r.reward);
        let mut buf = Vec::new();
        let ok = record_episode(&env, &mut IdleController, 3, 42, |rec| write_record(&mut buf, rec).unwrap());
        assert!(!ok);
        let recs = read_records(buf.as_slice()).unwrap();
        assert_eq!(recs.len(), 12);
        assert!(recs.iter().all(|r| r.episode == 3));
        assert_eq!(recs[0].step, 1);
        assert!(recs.last().unwrap().done);
        assert!(recs[..11].iter().all(|r| !r.done));
        let first: serde_json::Value = serde_json::from_slice(buf.split(|b| *b == b'\n').next().unwrap()).unwrap();
        for key in ["episode", "step", "q", "u", "p_l", "p_gb", "r1", "r2", "r3", "attached", "success", "done"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
}
