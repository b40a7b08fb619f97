//! The log-loading MDP: reset, joint-target actions, kinematic grasping,
//! ballistic free-log motion, observations, and success detection.

use std::sync::Arc;

use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{
    BodyPoses, JointKind, JointVector, KinematicChain, ACTIVE_JOINTS, J_GRAPPLE_LEFT,
    J_GRAPPLE_RIGHT, NUM_ACTIVE, NUM_JOINTS, PASSIVE_JOINTS,
};
use crate::parallel::{self, Parallelism};
use crate::rewards::{proximity_score, reward_terms, RewardConfig, RewardInputs, RewardTerms};

pub const GRAVITY: f64 = 9.81;
pub const OBS_DIM: usize = 53;
pub const ACT_DIM: usize = NUM_ACTIVE;

pub type Action = [f64; ACT_DIM];

/// Offsets of the observation blocks.
pub mod obs_index {
    pub const Q: usize = 0;
    pub const Q_DOT: usize = 7;
    pub const P_GB: usize = 14;
    pub const H_GB: usize = 17;
    pub const V_GB: usize = 21;
    pub const P_GL: usize = 24;
    pub const P_GR: usize = 27;
    pub const P_L: usize = 30;
    pub const H_L: usize = 33;
    pub const P_UNL: usize = 37;
    pub const P_TGT: usize = 40;
    pub const GB_MINUS_L: usize = 43;
    pub const L_MINUS_UNL: usize = 46;
    pub const L_MINUS_TGT: usize = 49;
    pub const A_L: usize = 52;
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSection {
    pub radius: f64,
    pub length: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSection {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub yaw_deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspSection {
    pub capture_radius: f64,
    pub close_threshold_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessSection {
    pub radius: f64,
    pub speed: f64,
    pub require_release: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainKind {
    Flat,
    Rough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSection {
    pub kind: TerrainKind,
    /// Ground plane elevation, meters.
    pub height: f64,
    /// Rough terrain: cell heights uniform in [height, height + amplitude].
    pub amplitude: f64,
    pub cell_size: f64,
    pub seed: u64,
}

/// `[env]` as written in the config file (degrees for angles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub dt: f64,
    pub episode_length: u32,
    pub num_envs: usize,
    pub seed: u64,
    pub action_scale_per_s: [f64; NUM_ACTIVE],
    pub max_joint_speed_per_s: [f64; NUM_JOINTS],
    pub joint_init_ranges: [[f64; 2]; NUM_JOINTS],
    pub log: LogSection,
    pub spawn: SpawnSection,
    pub grasp: GraspSection,
    pub success: SuccessSection,
    pub terrain: TerrainSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnRegion {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub yaw: [f64; 2],
}

impl SpawnRegion {
    pub fn contains_xy(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.x[0] - margin
            && x <= self.x[1] + margin
            && y >= self.y[0] - margin
            && y <= self.y[1] + margin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogSpec {
    pub radius: f64,
    pub length: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terrain {
    Flat { height: f64 },
    Rough {
        height: f64,
        amplitude: f64,
        cell_size: f64,
        seed: u64,
    },
}

impl Terrain {
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::Rough {
                height,
                amplitude,
                cell_size,
                seed,
            } => {
                let ix = (x / cell_size).floor() as i64;
                let iy = (y / cell_size).floor() as i64;
                height + amplitude * cell_hash(seed, ix, iy)
            }
        }
    }
}

/// Uniform [0, 1) from a cell coordinate (splitmix64 finalizer).
fn cell_hash(seed: u64, ix: i64, iy: i64) -> f64 {
    let mut z = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Runtime environment configuration, SI units and radians.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    pub action_scale: [f64; NUM_ACTIVE],
    pub max_joint_speed: JointVector,
    pub episode_length: u32,
    pub joint_init_ranges: [[f64; 2]; NUM_JOINTS],
    pub spawn: SpawnRegion,
    pub log: LogSpec,
    pub grasp_capture_radius: f64,
    pub grasp_close_threshold: f64,
    pub success_radius: f64,
    pub success_speed: f64,
    pub success_requires_release: bool,
    pub terrain: Terrain,
    pub num_envs: usize,
    pub seed: u64,
}

impl EnvSection {
    pub fn resolve(&self, chain: &KinematicChain) -> Result<EnvConfig, ConfigError> {
        let inv = ConfigError::invalid;
        if !(self.dt > 0.0) {
            return Err(inv("env.dt", "must be positive"));
        }
        if self.episode_length < 1 {
            return Err(inv("env.episode_length", "must be at least 1"));
        }
        if self.num_envs < 1 {
            return Err(inv("env.num_envs", "must be at least 1"));
        }
        if self.action_scale_per_s.iter().any(|c| !(*c >= 0.0)) {
            return Err(inv("env.action_scale_per_s", "must be non-negative"));
        }
        if self.max_joint_speed_per_s.iter().any(|c| !(*c > 0.0)) {
            return Err(inv("env.max_joint_speed_per_s", "must be positive"));
        }
        let mut ranges = [[0.0; 2]; NUM_JOINTS];
        for (i, r) in self.joint_init_ranges.iter().enumerate() {
            let j = chain.joint(i);
            let (lo, hi) = match j.kind {
                JointKind::Revolute => (r[0].to_radians(), r[1].to_radians()),
                JointKind::Prismatic => (r[0], r[1]),
            };
            if PASSIVE_JOINTS.contains(&i) {
                continue;
            }
            let field = format!("env.joint_init_ranges.{i}");
            if lo > hi {
                return Err(ConfigError::invalid(field, "lo > hi"));
            }
            // Degree round trips can land a hair outside the limit.
            let lo = if (lo - j.min_limit).abs() < 1e-12 { j.min_limit } else { lo };
            let hi = if (hi - j.max_limit).abs() < 1e-12 { j.max_limit } else { hi };
            if lo < j.min_limit || hi > j.max_limit {
                return Err(ConfigError::invalid(field, format!("outside limits of {}", j.name)));
            }
            ranges[i] = [lo, hi];
        }
        let s = &self.spawn;
        if s.x[0] > s.x[1] || s.y[0] > s.y[1] || s.yaw_deg[0] > s.yaw_deg[1] {
            return Err(inv("env.spawn", "ranges must be ordered [lo, hi]"));
        }
        if !(self.log.radius > 0.0) || !(self.log.length > 0.0) || !(self.log.mass > 0.0) {
            return Err(inv("env.log", "radius, length and mass must be positive"));
        }
        if !(self.grasp.capture_radius > 0.0) {
            return Err(inv("env.grasp.capture_radius", "must be positive"));
        }
        if !(self.success.radius > 0.0) || !(self.success.speed > 0.0) {
            return Err(inv("env.success", "radius and speed must be positive"));
        }
        let t = &self.terrain;
        let terrain = match t.kind {
            TerrainKind::Flat => Terrain::Flat { height: t.height },
            TerrainKind::Rough => {
                if !(t.cell_size > 0.0) || t.amplitude < 0.0 {
                    return Err(inv("env.terrain", "rough terrain needs cell_size > 0, amplitude >= 0"));
                }
                Terrain::Rough {
                    height: t.height,
                    amplitude: t.amplitude,
                    cell_size: t.cell_size,
                    seed: t.seed,
                }
            }
        };
        Ok(EnvConfig {
            dt: self.dt,
            action_scale: self.action_scale_per_s,
            max_joint_speed: self.max_joint_speed_per_s,
            episode_length: self.episode_length,
            joint_init_ranges: ranges,
            spawn: SpawnRegion {
                x: s.x,
                y: s.y,
                yaw: [s.yaw_deg[0].to_radians(), s.yaw_deg[1].to_radians()],
            },
            log: LogSpec {
                radius: self.log.radius,
                length: self.log.length,
                mass: self.log.mass,
            },
            grasp_capture_radius: self.grasp.capture_radius,
            grasp_close_threshold: self.grasp.close_threshold_deg.to_radians(),
            success_radius: self.success.radius,
            success_speed: self.success.speed,
            success_requires_release: self.success.require_release,
            terrain,
            num_envs: self.num_envs,
            seed: self.seed,
        })
    }
}

/// Height of the grapple body above the midpoint of its fully closed tips
/// when hanging plumb.
pub fn grasp_height(chain: &KinematicChain) -> f64 {
    let mut q = [0.0; NUM_JOINTS];
    q[J_GRAPPLE_LEFT] = chain.joint(J_GRAPPLE_LEFT).max_limit;
    q[J_GRAPPLE_RIGHT] = chain.joint(J_GRAPPLE_RIGHT).max_limit;
    let q = chain.resolve_passive_joints(&q);
    let p = chain.forward_kinematics_unchecked(&q);
    p.p_gb().z - 0.5 * (p.left_tip.z + p.right_tip.z)
}

impl EnvConfig {
    pub fn support_height(&self, chain: &KinematicChain, x: f64, y: f64) -> f64 {
        if chain.bed.over_footprint(x, y) {
            chain.bed.floor_height()
        } else {
            self.terrain.height_at(x, y)
        }
    }

    /// Verify by sampling forward kinematics that the grasp pose above every
    /// point of a grid over the spawn region is reachable.
    pub fn check_reach(&self, chain: &KinematicChain) -> Result<(), ConfigError> {
        const TOL: f64 = 0.15;
        let slew = chain.forward_kinematics_unchecked(&[0.0; NUM_JOINTS]).bodies[1]
            .translation
            .vector;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut samples = Vec::with_capacity(4000);
        let mut heading0 = 0.0;
        for _ in 0..4000 {
            let mut q = [0.0; NUM_JOINTS];
            for j in 1..4 {
                let spec = chain.joint(j);
                q[j] = spec.min_limit + (spec.max_limit - spec.min_limit) * rng.random::<f64>();
            }
            let q = chain.resolve_passive_joints(&q);
            let p = chain.forward_kinematics_unchecked(&q).p_gb() - slew;
            heading0 = p.y.atan2(p.x);
            samples.push((p.x.hypot(p.y), p.z));
        }
        let lift = grasp_height(chain);
        let j1 = chain.joint(0);
        let n = 5;
        for a in 0..n {
            for b in 0..n {
                let x = self.spawn.x[0] + (self.spawn.x[1] - self.spawn.x[0]) * a as f64 / (n - 1) as f64;
                let y = self.spawn.y[0] + (self.spawn.y[1] - self.spawn.y[0]) * b as f64 / (n - 1) as f64;
                let z = self.support_height(chain, x, y) + self.log.radius + lift;
                let (dx, dy) = (x - slew.x, y - slew.y);
                let heading = wrap_angle(dy.atan2(dx) - heading0);
                let r = dx.hypot(dy);
                let dz = z - slew.z;
                let best = samples
                    .iter()
                    .map(|(sr, sz)| (sr - r).hypot(sz - dz))
                    .fold(f64::INFINITY, f64::min);
                if !j1.within(heading) || best > TOL {
                    return Err(ConfigError::invalid(
                        "env.spawn",
                        format!("spawn point ({x:.2}, {y:.2}) is outside manipulator reach"),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

// ---------------------------------------------------------------------------
// State

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: JointVector,
    pub q_dot: JointVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub joints: JointState,
    pub targets: JointVector,
    pub log_position: Vector3<f64>,
    pub log_orientation: UnitQuaternion<f64>,
    pub log_velocity: Vector3<f64>,
    pub attached: bool,
    /// Log pose in the grapple-body frame, frozen at grasp time.
    pub attachment: Option<Isometry3<f64>>,
    pub poses: BodyPoses,
    /// Backward-difference grapple-body velocity over the last step.
    pub gb_velocity: Vector3<f64>,
    pub step_count: u32,
}

impl WorldState {
    pub fn log_axis(&self) -> Vector3<f64> {
        self.log_orientation * Vector3::x()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn put(&mut self, at: usize, v: &Vector3<f64>) {
        self.0[at..at + 3].copy_from_slice(v.as_slice());
    }

    /// Quaternions are stored x, y, z, w.
    fn put_quat(&mut self, at: usize, q: &UnitQuaternion<f64>) {
        self.0[at..at + 4].copy_from_slice(q.as_ref().coords.as_slice());
    }

    pub fn block3(&self, at: usize) -> Vector3<f64> {
        Vector3::new(self.0[at], self.0[at + 1], self.0[at + 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub d_lgb: f64,
    pub d_lunl: f64,
    pub d_ltgt: f64,
    pub attached: bool,
    pub grasped: bool,
    pub released: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward_terms: RewardTerms,
    pub done: bool,
    pub success: bool,
    pub info: StepInfo,
}

// ---------------------------------------------------------------------------
// Environment

/// Immutable environment definition shared by every instance.
#[derive(Debug, Clone)]
pub struct ForwarderEnv {
    pub chain: Arc<KinematicChain>,
    pub config: Arc<EnvConfig>,
    pub reward: RewardConfig,
}

/// Per-environment random stream: `seed` selects the run, `stream` the env.
pub fn env_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

impl ForwarderEnv {
    pub fn new(chain: KinematicChain, config: EnvConfig, reward: RewardConfig) -> Self {
        ForwarderEnv {
            chain: Arc::new(chain),
            config: Arc::new(config),
            reward,
        }
    }

    pub fn with_config(&self, config: EnvConfig) -> Self {
        ForwarderEnv {
            chain: self.chain.clone(),
            config: Arc::new(config),
            reward: self.reward.clone(),
        }
    }

    pub fn reset(&self, rng: &mut impl Rng) -> WorldState {
        let chain = &*self.chain;
        let cfg = &*self.config;
        let mut q = [0.0; NUM_JOINTS];
        for &j in &ACTIVE_JOINTS {
            q[j] = sample(rng, cfg.joint_init_ranges[j]);
        }
        let q = chain.clip_to_limits(&chain.resolve_passive_joints(&q));
        let poses = chain.forward_kinematics_unchecked(&q);
        let x = sample(rng, cfg.spawn.x);
        let y = sample(rng, cfg.spawn.y);
        let yaw = sample(rng, cfg.spawn.yaw);
        let z = cfg.support_height(chain, x, y) + cfg.log.radius;
        WorldState {
            joints: JointState {
                q,
                q_dot: [0.0; NUM_JOINTS],
            },
            targets: q,
            log_position: Vector3::new(x, y, z),
            log_orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            log_velocity: Vector3::zeros(),
            attached: false,
            attachment: None,
            poses,
            gb_velocity: Vector3::zeros(),
            step_count: 0,
        }
    }

    /// Joint position goals `clip(q + A·c·dt)`; passive joints keep `q`.
    pub fn apply_action(&self, state: &WorldState, action: &Action) -> JointVector {
        let mut u = state.joints.q;
        for (k, &j) in ACTIVE_JOINTS.iter().enumerate() {
            let a = sanitize(action[k]);
            u[j] = self
                .chain
                .joint(j)
                .clip(state.joints.q[j] + a * self.config.action_scale[k] * self.config.dt);
        }
        u
    }

    pub fn step(&self, state: &mut WorldState, action: &Action) -> StepResult {
        let chain = &*self.chain;
        let cfg = &*self.config;
        let dt = cfg.dt;

        let targets = self.apply_action(state, action);
        let q_old = state.joints.q;
        let mut q = q_old;
        for j in 0..NUM_JOINTS {
            let max_step = cfg.max_joint_speed[j] * dt;
            q[j] += (targets[j] - q_old[j]).clamp(-max_step, max_step);
        }
        let q = chain.clip_to_limits(&chain.resolve_passive_joints(&q));
        let q_dot = std::array::from_fn(|j| (q[j] - q_old[j]) / dt);
        let gb_old = state.poses.p_gb();
        let poses = chain.forward_kinematics_unchecked(&q);
        state.gb_velocity = (poses.p_gb() - gb_old) / dt;
        state.joints = JointState { q, q_dot };
        state.targets = targets;
        state.poses = poses;
        state.step_count += 1;

        let mut grasped = false;
        let mut released = false;
        if state.attached {
            if self.release_check(state) {
                state.attached = false;
                state.attachment = None;
                released = true;
            } else {
                let attach = state.attachment.expect("attached state carries its transform");
                let pose = state.poses.grapple_body() * attach;
                let new_pos = pose.translation.vector;
                state.log_velocity = (new_pos - state.log_position) / dt;
                state.log_position = new_pos;
                state.log_orientation = pose.rotation;
            }
        }
        if !state.attached {
            if !released {
                self.free_log_motion(state);
            }
            if self.grasp_check(state) {
                let gb = state.poses.grapple_body();
                let log_pose = Isometry3::from_parts(state.log_position.into(), state.log_orientation);
                state.attachment = Some(gb.inverse() * log_pose);
                state.attached = true;
                grasped = true;
            }
        }

        let observation = self.build_observation(state);
        let inputs = self.reward_inputs(state);
        let reward_terms = reward_terms(&inputs, &self.reward);
        let success = self.success_check(state);
        let done = success || state.step_count >= cfg.episode_length;
        StepResult {
            observation,
            reward_terms,
            done,
            success,
            info: StepInfo {
                d_lgb: inputs.d_log_grapple,
                d_lunl: inputs.d_log_unload,
                d_ltgt: inputs.d_log_target,
                attached: state.attached,
                grasped,
                released,
            },
        }
    }

    /// Ballistic flight under gravity, stopped at the support surface. A free
    /// log below the guard tops cannot cross the bed walls.
    fn free_log_motion(&self, state: &mut WorldState) {
        let chain = &*self.chain;
        let cfg = &*self.config;
        let dt = cfg.dt;
        let r = cfg.log.radius;
        let old = state.log_position;
        let mut v = state.log_velocity;
        let mut p = Vector3::new(
            old.x + v.x * dt,
            old.y + v.y * dt,
            old.z + v.z * dt - 0.5 * GRAVITY * dt * dt,
        );
        v.z -= GRAVITY * dt;
        let was_over = chain.bed.over_footprint(old.x, old.y);
        let now_over = chain.bed.over_footprint(p.x, p.y);
        if was_over != now_over && p.z - r < chain.bed.guard_top() {
            p.x = old.x;
            p.y = old.y;
            v.x = 0.0;
            v.y = 0.0;
        }
        let rest = cfg.support_height(chain, p.x, p.y) + r;
        if p.z <= rest {
            p.z = rest;
            v = Vector3::zeros();
        }
        state.log_position = p;
        state.log_velocity = v;
    }

    fn jaws_closed(&self, state: &WorldState) -> bool {
        let t = self.config.grasp_close_threshold;
        state.joints.q[J_GRAPPLE_LEFT] >= t && state.joints.q[J_GRAPPLE_RIGHT] >= t
    }

    /// Capture test for a free log: both tips near the log axis segment,
    /// the log centre between the tips laterally, and both jaws closed.
    pub fn grasp_check(&self, state: &WorldState) -> bool {
        if state.attached || !self.jaws_closed(state) {
            return false;
        }
        let axis = state.log_axis();
        let half = 0.5 * self.config.log.length;
        let a = state.log_position - half * axis;
        let b = state.log_position + half * axis;
        let cap = self.config.grasp_capture_radius;
        let tips = [state.poses.left_tip, state.poses.right_tip];
        if tips.iter().any(|t| point_segment_distance(t, &a, &b) > cap) {
            return false;
        }
        let lateral = state.poses.h_gb() * Vector3::y();
        let sl = (tips[0] - state.log_position).dot(&lateral);
        let sr = (tips[1] - state.log_position).dot(&lateral);
        sl * sr < 0.0
    }

    /// Both jaws opened past the close threshold.
    pub fn release_check(&self, state: &WorldState) -> bool {
        let t = self.config.grasp_close_threshold;
        state.attached && state.joints.q[J_GRAPPLE_LEFT] < t && state.joints.q[J_GRAPPLE_RIGHT] < t
    }

    pub fn reward_inputs(&self, state: &WorldState) -> RewardInputs {
        let bed = &self.chain.bed;
        RewardInputs {
            d_log_grapple: (state.log_position - state.poses.p_gb()).norm(),
            d_log_unload: (state.log_position - bed.unload_point).norm(),
            d_log_target: (state.log_position - bed.target_point).norm(),
            log_z: state.log_position.z,
            log_vz: state.log_velocity.z,
            attached: state.attached,
        }
    }

    pub fn completion_score(&self, state: &WorldState) -> f64 {
        completion_score(
            &state.log_position,
            &state.poses.p_gb(),
            &self.chain.bed.target_point,
        )
    }

    pub fn build_observation(&self, state: &WorldState) -> Observation {
        use obs_index::*;
        let bed = &self.chain.bed;
        let mut o = Observation([0.0; OBS_DIM]);
        for (k, &j) in ACTIVE_JOINTS.iter().enumerate() {
            o.0[Q + k] = state.joints.q[j];
            o.0[Q_DOT + k] = state.joints.q_dot[j];
        }
        let p_gb = state.poses.p_gb();
        let p_l = state.log_position;
        o.put(P_GB, &p_gb);
        o.put_quat(H_GB, &state.poses.h_gb());
        o.put(V_GB, &state.gb_velocity);
        o.put(P_GL, &state.poses.left_tip);
        o.put(P_GR, &state.poses.right_tip);
        o.put(P_L, &p_l);
        o.put_quat(H_L, &state.log_orientation);
        o.put(P_UNL, &bed.unload_point);
        o.put(P_TGT, &bed.target_point);
        o.put(GB_MINUS_L, &(p_gb - p_l));
        o.put(L_MINUS_UNL, &(p_l - bed.unload_point));
        o.put(L_MINUS_TGT, &(p_l - bed.target_point));
        o.0[A_L] = self.completion_score(state);
        o
    }

    pub fn success_check(&self, state: &WorldState) -> bool {
        let cfg = &*self.config;
        (state.log_position - self.chain.bed.target_point).norm() <= cfg.success_radius
            && state.log_velocity.norm() <= cfg.success_speed
            && !(cfg.success_requires_release && state.attached)
    }
}

/// Product of the log↔target, log↔grapple and grapple↔target proximity scores.
pub fn completion_score(log: &Vector3<f64>, gb: &Vector3<f64>, target: &Vector3<f64>) -> f64 {
    proximity_score((log - target).norm())
        * proximity_score((log - gb).norm())
        * proximity_score((gb - target).norm())
}

fn sanitize(a: f64) -> f64 {
    if a.is_finite() {
        a.clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + t * ab)).norm()
}

// ---------------------------------------------------------------------------
// Batches

/// One environment with its own random stream.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    pub state: WorldState,
    pub rng: ChaCha8Rng,
    pub episode_return: f64,
}

impl EnvInstance {
    pub fn new(env: &ForwarderEnv, seed: u64, stream: u64) -> Self {
        let mut rng = env_rng(seed, stream);
        let state = env.reset(&mut rng);
        EnvInstance {
            state,
            rng,
            episode_return: 0.0,
        }
    }

    /// Step and reset on termination. The returned observation is the
    /// post-step one; the next policy input comes from [`Self::observe`].
    pub fn step_autoreset(&mut self, env: &ForwarderEnv, action: &Action) -> StepResult {
        let result = env.step(&mut self.state, action);
        if result.done {
            self.state = env.reset(&mut self.rng);
        }
        result
    }
}

/// A batch of independent environments stepped in lockstep. Environment `i`
/// uses stream `i` of the batch seed, so its trajectory does not depend on
/// the batch size.
#[derive(Debug, Clone)]
pub struct VecEnv {
    pub env: ForwarderEnv,
    pub instances: Vec<EnvInstance>,
    pub parallelism: Parallelism,
}

impl VecEnv {
    pub fn new(env: ForwarderEnv, num_envs: usize, seed: u64) -> Self {
        let instances = (0..num_envs as u64)
            .map(|i| EnvInstance::new(&env, seed, i))
            .collect();
        VecEnv {
            env,
            instances,
            parallelism: Parallelism::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn observe(&self, i: usize) -> Observation {
        self.env.build_observation(&self.instances[i].state)
    }

    pub fn step(&mut self, actions: &[Action]) -> Vec<StepResult> {
        assert_eq!(actions.len(), self.instances.len(), "one action per env");
        let env = &self.env;
        parallel::map_mut(self.parallelism, &mut self.instances, |i, inst| {
            inst.step_autoreset(env, &actions[i])
        })
    }
}
