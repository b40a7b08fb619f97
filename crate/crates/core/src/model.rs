//! Articulated forwarder crane: bodies, joints, limits, bed geometry, and
//! forward kinematics.
//!
//! The chain is a tree rooted at the fixed trailer base. `joints[i]` drives
//! `bodies[i + 1]` relative to that body's parent. Angles are radians
//! throughout; the file schema ([`ModelConfig`]) carries degrees.

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const NUM_BODIES: usize = 10;
pub const NUM_JOINTS: usize = 9;
pub const NUM_ACTIVE: usize = 7;

/// Joint indices driven by the policy: j1, j2, j3, j4, j7, j8, j9.
pub const ACTIVE_JOINTS: [usize; NUM_ACTIVE] = [0, 1, 2, 3, 6, 7, 8];
/// Free-swinging hook joints j5, j6.
pub const PASSIVE_JOINTS: [usize; 2] = [4, 5];

pub const J_SLEW: usize = 0;
pub const J_SLIDER: usize = 3;
pub const J_HOOK_PITCH: usize = 4;
pub const J_HOOK_ROLL: usize = 5;
pub const J_ROTATOR: usize = 6;
pub const J_GRAPPLE_LEFT: usize = 7;
pub const J_GRAPPLE_RIGHT: usize = 8;

pub const BODY_GRAPPLE_BODY: usize = 7;
pub const BODY_GRAPPLE_LEFT: usize = 8;
pub const BODY_GRAPPLE_RIGHT: usize = 9;

pub type JointVector = [f64; NUM_JOINTS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub name: String,
    pub mass: f64,
    pub parent: Option<usize>,
    /// Joint frame origin in the parent body frame, meters.
    pub local_offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub axis: Unit<Vector3<f64>>,
    /// Fixed rotation of the joint frame relative to the parent body at zero
    /// articulation.
    pub rest_rotation: UnitQuaternion<f64>,
    pub min_limit: f64,
    pub max_limit: f64,
    pub active: bool,
}

impl JointSpec {
    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.min_limit, self.max_limit)
    }

    pub fn within(&self, v: f64) -> bool {
        v >= self.min_limit && v <= self.max_limit
    }

    fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, q),
            ),
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(self.axis.into_inner() * q),
                UnitQuaternion::identity(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BedGeometry {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    /// Guard pole height above the bed floor.
    pub guard_height: f64,
    pub unload_point: Vector3<f64>,
    pub target_point: Vector3<f64>,
}

impl BedGeometry {
    pub fn floor_height(&self) -> f64 {
        self.center.z + self.half_extents.z
    }

    pub fn guard_top(&self) -> f64 {
        self.floor_height() + self.guard_height
    }

    /// Whether an x-y point lies over the bed footprint.
    pub fn over_footprint(&self, x: f64, y: f64) -> bool {
        (x - self.center.x).abs() <= self.half_extents.x
            && (y - self.center.y).abs() <= self.half_extents.y
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = p - self.center;
        (0..3).all(|i| d[i].abs() <= self.half_extents[i] + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub bodies: Vec<BodySpec>,
    pub joints: Vec<JointSpec>,
    /// Tip positions in the left and right grapple body frames.
    pub grapple_tip_offsets: [Vector3<f64>; 2],
    pub bed: BedGeometry,
}

/// World poses of every body plus the two grapple tips.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPoses {
    pub bodies: Vec<Isometry3<f64>>,
    pub left_tip: Vector3<f64>,
    pub right_tip: Vector3<f64>,
}

impl BodyPoses {
    pub fn grapple_body(&self) -> &Isometry3<f64> {
        &self.bodies[BODY_GRAPPLE_BODY]
    }

    pub fn p_gb(&self) -> Vector3<f64> {
        self.bodies[BODY_GRAPPLE_BODY].translation.vector
    }

    pub fn h_gb(&self) -> UnitQuaternion<f64> {
        self.bodies[BODY_GRAPPLE_BODY].rotation
    }

    pub fn p_gl(&self) -> Vector3<f64> {
        self.left_tip
    }

    pub fn p_gr(&self) -> Vector3<f64> {
        self.right_tip
    }
}

impl KinematicChain {
    pub fn load_default() -> Self {
        crate::config::Config::embedded_default()
            .model
            .build()
            .expect("embedded model is valid")
    }

    pub fn joint(&self, i: usize) -> &JointSpec {
        &self.joints[i]
    }

    pub fn lower_limits(&self) -> JointVector {
        std::array::from_fn(|i| self.joints[i].min_limit)
    }

    pub fn upper_limits(&self) -> JointVector {
        std::array::from_fn(|i| self.joints[i].max_limit)
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    pub fn clip_to_limits(&self, q: &JointVector) -> JointVector {
        std::array::from_fn(|i| self.joints[i].clip(q[i]))
    }

    pub fn check_limits(&self, q: &JointVector) -> Result<(), ModelError> {
        for (j, &v) in self.joints.iter().zip(q) {
            if !j.within(v) {
                return Err(ModelError::LimitViolation {
                    joint: j.name.clone(),
                    value: v,
                    min: j.min_limit,
                    max: j.max_limit,
                });
            }
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Result<BodyPoses, ModelError> {
        self.check_limits(q)?;
        Ok(self.forward_kinematics_unchecked(q))
    }

    /// Forward kinematics without the limit check, for callers that already
    /// hold a clipped configuration.
    pub fn forward_kinematics_unchecked(&self, q: &JointVector) -> BodyPoses {
        let mut poses: Vec<Isometry3<f64>> = Vec::with_capacity(NUM_BODIES);
        poses.push(Isometry3::identity());
        for (i, joint) in self.joints.iter().enumerate() {
            let body = &self.bodies[i + 1];
            let parent = poses[body.parent.expect("validated tree")];
            let mount = Isometry3::from_parts(
                Translation3::from(body.local_offset),
                joint.rest_rotation,
            );
            poses.push(parent * mount * joint.motion(q[i]));
        }
        let left_tip = poses[BODY_GRAPPLE_LEFT].transform_point(&self.grapple_tip_offsets[0].into());
        let right_tip =
            poses[BODY_GRAPPLE_RIGHT].transform_point(&self.grapple_tip_offsets[1].into());
        BodyPoses {
            bodies: poses,
            left_tip: left_tip.coords,
            right_tip: right_tip.coords,
        }
    }

    /// World orientation of the hook joint frame before its own rotation.
    fn hook_mount_rotation(&self, q: &JointVector) -> UnitQuaternion<f64> {
        let mut chain_rots = [UnitQuaternion::identity(); NUM_BODIES];
        for i in 0..J_HOOK_PITCH {
            let body = &self.bodies[i + 1];
            let parent = chain_rots[body.parent.expect("validated tree")];
            let j = &self.joints[i];
            let motion = match j.kind {
                JointKind::Revolute => UnitQuaternion::from_axis_angle(&j.axis, q[i]),
                JointKind::Prismatic => UnitQuaternion::identity(),
            };
            chain_rots[i + 1] = parent * j.rest_rotation * motion;
        }
        let hook = &self.bodies[J_HOOK_PITCH + 1];
        chain_rots[hook.parent.expect("validated tree")] * self.joints[J_HOOK_PITCH].rest_rotation
    }

    /// Replace j5/j6 so the grapple assembly hangs plumb, clipped to their
    /// limits. Active entries are returned untouched.
    pub fn resolve_passive_joints(&self, q: &JointVector) -> JointVector {
        let mount = self.hook_mount_rotation(q);
        // World up seen from the hook mount frame; the pitch (about y) then
        // roll (about x) pair must map local z onto it.
        let g = mount.inverse() * Vector3::z();
        let roll = -g.y.clamp(-1.0, 1.0).asin();
        let pitch = g.x.atan2(g.z);
        let mut out = *q;
        out[J_HOOK_PITCH] = self.joints[J_HOOK_PITCH].clip(pitch);
        out[J_HOOK_ROLL] = self.joints[J_HOOK_ROLL].clip(roll);
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Invalid(m));
        if self.bodies.len() != NUM_BODIES {
            return bad(format!("expected {NUM_BODIES} bodies, got {}", self.bodies.len()));
        }
        if self.joints.len() != NUM_JOINTS {
            return bad(format!("expected {NUM_JOINTS} joints, got {}", self.joints.len()));
        }
        if self.bodies[0].parent.is_some() {
            return bad("first body must be the root".into());
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if !(b.mass > 0.0) {
                return bad(format!("body {} has non-positive mass", b.name));
            }
            if i > 0 {
                // Parents listed before children: acyclic, single root, all reachable.
                match b.parent {
                    Some(p) if p < i => {}
                    _ => return bad(format!("body {} must have an earlier parent", b.name)),
                }
            }
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.min_limit < j.max_limit) {
                return bad(format!("joint {} has min >= max", j.name));
            }
            let prismatic = i == J_SLIDER;
            if (j.kind == JointKind::Prismatic) != prismatic {
                return bad(format!("joint {}: only j4 may be prismatic", j.name));
            }
            let should_be_active = ACTIVE_JOINTS.contains(&i);
            if j.active != should_be_active {
                return bad(format!("joint {}: active flag must be {should_be_active}", j.name));
            }
        }
        let tol = 1e-12;
        let pitch = &self.joints[J_HOOK_PITCH];
        let roll = &self.joints[J_HOOK_ROLL];
        if (pitch.axis.into_inner() - Vector3::y()).norm() > tol
            || (roll.axis.into_inner() - Vector3::x()).norm() > tol
            || roll.rest_rotation.angle() > tol
            || self.joints[J_ROTATOR].rest_rotation.angle() > tol
            || (self.joints[J_ROTATOR].axis.into_inner() - Vector3::z()).norm() > tol
        {
            return bad("hook joints must be pitch (y) then roll (x) feeding a z rotator".into());
        }
        let bed = &self.bed;
        if bed.unload_point.z <= bed.floor_height() {
            return bad("unload point must be above the bed floor".into());
        }
        if !bed.contains(&bed.target_point) {
            return bad("target point must lie inside the bed box".into());
        }
        if (bed.unload_point.x - bed.target_point.x).abs() > tol
            || (bed.unload_point.y - bed.target_point.y).abs() > tol
        {
            return bad("unload and target points must share x-y".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyEntry {
    pub name: String,
    pub mass: f64,
    pub parent: Option<String>,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub name: String,
    pub kind: JointKind,
    pub axis: [f64; 3],
    /// Degrees for revolute joints, meters for prismatic.
    pub min: f64,
    pub max: f64,
    pub active: bool,
    /// Fixed roll/pitch/yaw of the joint frame, degrees.
    pub rest_rpy_deg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrappleEntry {
    pub left_tip: [f64; 3],
    pub right_tip: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BedEntry {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub guard_height: f64,
    /// Unload point height above `center.z + guard_height`.
    pub unload_clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub bodies: Vec<BodyEntry>,
    pub joints: Vec<JointEntry>,
    pub grapple: GrappleEntry,
    pub bed: BedEntry,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl ModelConfig {
    pub fn build(&self) -> Result<KinematicChain, ModelError> {
        let mut bodies = Vec::with_capacity(self.bodies.len());
        for (i, b) in self.bodies.iter().enumerate() {
            let parent = match &b.parent {
                None => None,
                Some(p) => Some(
                    self.bodies[..i]
                        .iter()
                        .position(|o| &o.name == p)
                        .ok_or_else(|| {
                            ModelError::Invalid(format!(
                                "body {} references unknown or later parent {p}",
                                b.name
                            ))
                        })?,
                ),
            };
            bodies.push(BodySpec {
                name: b.name.clone(),
                mass: b.mass,
                parent,
                local_offset: v3(b.offset),
            });
        }
        let mut joints = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let axis = v3(j.axis);
            if axis.norm() < 1e-12 {
                return Err(ModelError::Invalid(format!("joint {} has zero axis", j.name)));
            }
            let (min, max) = match j.kind {
                JointKind::Revolute => (j.min.to_radians(), j.max.to_radians()),
                JointKind::Prismatic => (j.min, j.max),
            };
            let [r, p, y] = j.rest_rpy_deg.map(f64::to_radians);
            joints.push(JointSpec {
                name: j.name.clone(),
                kind: j.kind,
                axis: Unit::new_normalize(axis),
                rest_rotation: UnitQuaternion::from_euler_angles(r, p, y),
                min_limit: min,
                max_limit: max,
                active: j.active,
            });
        }
        let center = v3(self.bed.center);
        let half = v3(self.bed.half_extents);
        let floor = center.z + half.z;
        let bed = BedGeometry {
            center,
            half_extents: half,
            guard_height: self.bed.guard_height,
            unload_point: Vector3::new(
                center.x,
                center.y,
                center.z + self.bed.guard_height + self.bed.unload_clearance,
            ),
            target_point: Vector3::new(center.x, center.y, floor),
        };
        let chain = KinematicChain {
            bodies,
            joints,
            grapple_tip_offsets: [v3(self.grapple.left_tip), v3(self.grapple.right_tip)],
            bed,
        };
        chain.validate()?;
        Ok(chain)
    }
}
