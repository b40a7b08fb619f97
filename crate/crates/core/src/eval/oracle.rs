//! Scripted pick-and-place controller with closed-form crane inverse
//! kinematics. Serves as a reachability and success-criterion check that
//! does not depend on learning.

use nalgebra::{UnitQuaternion, Vector3};

use super::Controller;
use crate::env::{wrap_angle, Action, ForwarderEnv, Observation, WorldState, ACT_DIM};
use crate::model::{
    JointVector, KinematicChain, ACTIVE_JOINTS, J_GRAPPLE_LEFT, J_GRAPPLE_RIGHT, J_ROTATOR,
    J_SLEW, J_SLIDER, NUM_JOINTS,
};
use std::f64::consts::PI;

const J_BOOM: usize = 1;
const J_ELBOW: usize = 2;
const B_PIVOT: usize = 2;
const B_ELBOW: usize = 3;
const B_HOOK: usize = 5;
const BOOM_GRID: usize = 400;

/// In-plane crane geometry identified from forward kinematics:
/// hook = pivot + a∠(α0 + s2·j2) + (b + j4)∠(α0 + s2·j2 + β0 + s3·j3).
#[derive(Debug, Clone, PartialEq)]
pub struct CraneIk {
    pivot: Vector3<f64>,
    heading0: f64,
    a: f64,
    alpha0: f64,
    s2: f64,
    b: f64,
    beta0: f64,
    s3: f64,
    /// Hook height above the grapple body when hanging plumb.
    hang: f64,
    lo: JointVector,
    hi: JointVector,
}

fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let x = q * Vector3::x();
    x.y.atan2(x.x)
}

impl CraneIk {
    pub fn new(chain: &KinematicChain) -> Self {
        let fk = |q: &JointVector| chain.forward_kinematics_unchecked(&chain.resolve_passive_joints(q));
        let zero = [0.0; NUM_JOINTS];
        let p0 = fk(&zero);
        let pivot = p0.bodies[B_PIVOT].translation.vector;
        let elbow = p0.bodies[B_ELBOW].translation.vector;
        let hook = p0.bodies[B_HOOK].translation.vector;
        let d = elbow - pivot;
        let heading0 = d.y.atan2(d.x);
        let planar = |v: Vector3<f64>| (v.x.hypot(v.y), v.z);
        let (er, ez) = planar(d);
        let a = er.hypot(ez);
        let alpha0 = ez.atan2(er);
        let (hr, hz) = (
            (hook - elbow).dot(&Vector3::new(heading0.cos(), heading0.sin(), 0.0)),
            (hook - elbow).z,
        );
        let b = hr.hypot(hz);
        let beta0 = hz.atan2(hr) - alpha0;
        let h = 1e-3;
        let mut q = zero;
        q[J_BOOM] = h;
        let de = fk(&q).bodies[B_ELBOW].translation.vector - pivot;
        let s2 = (de.z.atan2(de.x.hypot(de.y)) - alpha0).signum();
        let mut q = zero;
        q[J_ELBOW] = h;
        let p = fk(&q);
        let dh = p.bodies[B_HOOK].translation.vector - p.bodies[B_ELBOW].translation.vector;
        let dr = dh.dot(&Vector3::new(heading0.cos(), heading0.sin(), 0.0));
        let s3 = (dh.z.atan2(dr) - alpha0 - beta0).signum();
        let hang = hook.z - p0.p_gb().z;
        CraneIk {
            pivot,
            heading0,
            a,
            alpha0,
            s2,
            b,
            beta0,
            s3,
            hang,
            lo: chain.lower_limits(),
            hi: chain.upper_limits(),
        }
    }

    /// Slew, boom, elbow and slider placing the plumb-hanging grapple body at
    /// `p_gb`. Picks the boom angle with the widest limit margin. `None`
    /// if no in-limit solution exists.
    pub fn solve_arm(&self, p_gb: &Vector3<f64>) -> Option<[f64; 4]> {
        let hook = p_gb + Vector3::new(0.0, 0.0, self.hang);
        let d = hook - self.pivot;
        let j1 = wrap_angle(d.y.atan2(d.x) - self.heading0);
        if j1 < self.lo[J_SLEW] || j1 > self.hi[J_SLEW] {
            return None;
        }
        let (r, z) = (d.x.hypot(d.y), d.z);
        let mut best: Option<([f64; 4], f64)> = None;
        for k in 0..=BOOM_GRID {
            let j2 = self.lo[J_BOOM] + (self.hi[J_BOOM] - self.lo[J_BOOM]) * k as f64 / BOOM_GRID as f64;
            let alpha = self.alpha0 + self.s2 * j2;
            let (er, ez) = (r - self.a * alpha.cos(), z - self.a * alpha.sin());
            let theta = ez.atan2(er);
            let reach = er.hypot(ez);
            let j3 = wrap_angle(theta - alpha - self.beta0) * self.s3;
            let j4 = reach - self.b;
            let margin = |v: f64, j: usize| {
                let span = self.hi[j] - self.lo[j];
                ((v - self.lo[j]).min(self.hi[j] - v)) / span
            };
            let m = margin(j2, J_BOOM).min(margin(j3, J_ELBOW)).min(margin(j4, J_SLIDER));
            if m >= 0.0 && best.as_ref().is_none_or(|(_, bm)| m > *bm) {
                best = Some(([j1, j2, j3, j4], m));
            }
        }
        best.map(|(q, _)| q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Descend,
    Close,
    Lift,
    Transfer,
    Place,
    Release,
}

/// Scripted controller: hover above the log, descend, close, lift to the
/// unload height, carry over the bed aligned with it, lower onto the floor.
#[derive(Debug, Clone)]
pub struct OracleController {
    ik: CraneIk,
    pub phase: Phase,
    pub gain: f64,
    pub hover: f64,
    pub open_angle: f64,
    phase_steps: u32,
    retries: u32,
}

impl OracleController {
    pub fn new(chain: &KinematicChain) -> Self {
        OracleController {
            ik: CraneIk::new(chain),
            phase: Phase::Approach,
            gain: 0.5,
            hover: 0.6,
            open_angle: -15f64.to_radians(),
            phase_steps: 0,
            retries: 0,
        }
    }

    fn set_phase(&mut self, p: Phase) {
        if p != self.phase {
            self.phase = p;
            self.phase_steps = 0;
        }
    }

    /// Full joint target for a grapple-body position and yaw. With `half_turn`
    /// the yaw only matters modulo π (symmetric grasp); otherwise the exact
    /// yaw must be achievable within the rotator range.
    fn joint_target(
        &self,
        env: &ForwarderEnv,
        q_now: &JointVector,
        p_gb: &Vector3<f64>,
        yaw: f64,
        half_turn: bool,
    ) -> Option<JointVector> {
        let arm = self.ik.solve_arm(p_gb)?;
        let mut q = *q_now;
        q[J_SLEW] = arm[0];
        q[J_BOOM] = arm[1];
        q[J_ELBOW] = arm[2];
        q[J_SLIDER] = arm[3];
        q[J_ROTATOR] = 0.0;
        let q = env.chain.resolve_passive_joints(&q);
        let yaw0 = yaw_of(&env.chain.forward_kinematics_unchecked(&q).h_gb());
        let rot = env.chain.joint(J_ROTATOR);
        let period = if half_turn { PI } else { 2.0 * PI };
        let x = (yaw - yaw0).rem_euclid(period);
        // Bed-aligned poses sit exactly on the rotator limits.
        let tol = 1e-6;
        let j7 = [x, x - period]
            .into_iter()
            .find(|v| *v >= rot.min_limit - tol && *v <= rot.max_limit + tol)
            .map(|v| rot.clip(v))?;
        let mut q = q;
        q[J_ROTATOR] = j7;
        Some(q)
    }

    /// Target that puts the held log's centre at `log_goal` with the grapple
    /// yawed by `yaw`, or by `yaw + π` if that fits the rotator range.
    fn carry_target(
        &self,
        env: &ForwarderEnv,
        state: &WorldState,
        log_goal: &Vector3<f64>,
        yaw: f64,
    ) -> Option<JointVector> {
        let attach = state.attachment?;
        let cur = state.poses.h_gb();
        let cur_yaw = yaw_of(&cur);
        [0.0, PI, -PI].iter().find_map(|flip| {
            let y = yaw + flip;
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), y - cur_yaw) * cur;
            let p_gb = log_goal - rot * attach.translation.vector;
            self.joint_target(env, &state.joints.q, &p_gb, y, false)
        })
    }

    fn action_toward(&self, env: &ForwarderEnv, state: &WorldState, target: &JointVector, cap: f64) -> Action {
        let cfg = &env.config;
        std::array::from_fn(|k| {
            let j = ACTIVE_JOINTS[k];
            let c = cfg.action_scale[k] * cfg.dt;
            if c <= 0.0 {
                return 0.0;
            }
            (self.gain * (target[j] - state.joints.q[j]) / c).clamp(-cap, cap)
        })
    }

    fn tracking_error(state: &WorldState, target: &JointVector) -> f64 {
        ACTIVE_JOINTS
            .iter()
            .filter(|&&j| j != J_GRAPPLE_LEFT && j != J_GRAPPLE_RIGHT)
            .map(|&j| (target[j] - state.joints.q[j]).abs())
            .fold(0.0, f64::max)
    }

    fn with_jaws(mut q: JointVector, angle: f64) -> JointVector {
        q[J_GRAPPLE_LEFT] = angle;
        q[J_GRAPPLE_RIGHT] = angle;
        q
    }

    fn grasp_pose(&self, env: &ForwarderEnv, state: &WorldState) -> (Vector3<f64>, f64) {
        let lift = crate::env::grasp_height(&env.chain);
        let p = state.log_position + Vector3::new(0.0, 0.0, lift);
        (p, yaw_of(&state.log_orientation))
    }
}

impl Controller for OracleController {
    fn reset(&mut self, _env: &ForwarderEnv, _state: &WorldState) {
        self.phase = Phase::Approach;
        self.phase_steps = 0;
        self.retries = 0;
    }

    fn act(&mut self, env: &ForwarderEnv, state: &WorldState, _obs: &Observation) -> Action {
        let q = &state.joints.q;
        let jaw_max = env.chain.joint(J_GRAPPLE_LEFT).max_limit;
        let jaw_min = env.chain.joint(J_GRAPPLE_LEFT).min_limit;
        let bed = &env.chain.bed;
        let hold = Self::with_jaws(*q, jaw_max);

        if state.attached && matches!(self.phase, Phase::Approach | Phase::Descend | Phase::Close) {
            self.set_phase(Phase::Lift);
        }
        if !state.attached && matches!(self.phase, Phase::Lift | Phase::Transfer | Phase::Place) {
            self.retries += 1;
            self.set_phase(Phase::Approach);
        }
        self.phase_steps += 1;

        let (target, cap) = match self.phase {
            Phase::Approach | Phase::Descend | Phase::Close => {
                let (p, yaw) = self.grasp_pose(env, state);
                let above = p + Vector3::new(0.0, 0.0, self.hover);
                let goal = if self.phase == Phase::Approach { above } else { p };
                let jaws = if self.phase == Phase::Close { jaw_max } else { self.open_angle };
                let Some(t) = self.joint_target(env, q, &goal, yaw, true) else {
                    return [0.0; ACT_DIM];
                };
                let t = Self::with_jaws(t, jaws);
                let err = Self::tracking_error(state, &t);
                match self.phase {
                    Phase::Approach if err < 0.02 => self.set_phase(Phase::Descend),
                    Phase::Descend if err < 0.003 => self.set_phase(Phase::Close),
                    Phase::Close
                        if q[J_GRAPPLE_LEFT] >= jaw_max - 1e-9
                            && q[J_GRAPPLE_RIGHT] >= jaw_max - 1e-9 =>
                    {
                        // Closed on nothing; reopen and try again.
                        self.retries += 1;
                        self.set_phase(Phase::Approach);
                    }
                    _ => {}
                }
                (t, 1.0)
            }
            Phase::Lift => {
                let goal = Vector3::new(state.log_position.x, state.log_position.y, bed.unload_point.z);
                let yaw = yaw_of(&state.poses.h_gb());
                let t = self.carry_target(env, state, &goal, yaw).map(|t| Self::with_jaws(t, jaw_max));
                let t = t.unwrap_or(hold);
                if (state.log_position.z - bed.unload_point.z).abs() < 0.05 || self.phase_steps > 120 {
                    self.set_phase(Phase::Transfer);
                }
                (t, 1.0)
            }
            Phase::Transfer | Phase::Place => {
                // Rotate so the log axis lies along the bed's long (x) axis.
                let gb_yaw = yaw_of(&state.poses.h_gb());
                let log_yaw = yaw_of(&state.log_orientation);
                let turn = wrap_angle(2.0 * (0.0 - log_yaw)) / 2.0;
                let goal = if self.phase == Phase::Transfer {
                    bed.unload_point
                } else {
                    bed.target_point + Vector3::new(0.0, 0.0, env.config.log.radius)
                };
                let t = self
                    .carry_target(env, state, &goal, gb_yaw + turn)
                    .map(|t| Self::with_jaws(t, jaw_max))
                    .unwrap_or(hold);
                if self.phase == Phase::Transfer
                    && (state.log_position - bed.unload_point).norm() < 0.05
                    && Self::tracking_error(state, &t) < 0.01
                {
                    self.set_phase(Phase::Place);
                }
                if self.phase == Phase::Place
                    && env.config.success_requires_release
                    && (state.log_position - goal).norm() < 0.02
                    && state.log_velocity.norm() < env.config.success_speed
                {
                    self.set_phase(Phase::Release);
                }
                (t, if self.phase == Phase::Place { 0.6 } else { 1.0 })
            }
            Phase::Release => (Self::with_jaws(*q, jaw_min), 1.0),
        };
        self.action_toward(env, state, &target, cap)
    }
}
