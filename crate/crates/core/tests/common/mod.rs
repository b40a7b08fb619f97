//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's kinematics, GAE or loss code.

#![allow(dead_code)]

use logloader::model::{JointKind, ModelConfig};

pub type Mat4 = [[f64; 4]; 4];

pub fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn translation(t: [f64; 3]) -> Mat4 {
    let mut m = identity();
    for i in 0..3 {
        m[i][3] = t[i];
    }
    m
}

/// Rodrigues rotation about `axis` (normalized here).
pub fn rotation(axis: [f64; 3], angle: f64) -> Mat4 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|a| a / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let mut m = identity();
    m[0][0] = c + x * x * t;
    m[0][1] = x * y * t - z * s;
    m[0][2] = x * z * t + y * s;
    m[1][0] = y * x * t + z * s;
    m[1][1] = c + y * y * t;
    m[1][2] = y * z * t - x * s;
    m[2][0] = z * x * t - y * s;
    m[2][1] = z * y * t + x * s;
    m[2][2] = c + z * z * t;
    m
}

/// Fixed-axis roll, pitch, yaw: `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rpy(r: f64, p: f64, y: f64) -> Mat4 {
    let rx = rotation([1.0, 0.0, 0.0], r);
    let ry = rotation([0.0, 1.0, 0.0], p);
    let rz = rotation([0.0, 0.0, 1.0], y);
    mul(&rz, &mul(&ry, &rx))
}

pub fn apply(m: &Mat4, p: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3])
}

/// Rotation block to quaternion (x, y, z, w), w ≥ 0.
pub fn quaternion(m: &Mat4) -> [f64; 4] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
            0.25 * s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[2][1] - m[1][2]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
            (m[0][2] - m[2][0]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
            (m[1][0] - m[0][1]) / s,
        ]
    };
    if q[3] < 0.0 {
        q.map(|v| -v)
    } else {
        q
    }
}

/// World transform of every body plus the two jaw tips, composed directly
/// from the file-level model description (degrees, body names).
pub struct OraclePoses {
    pub bodies: Vec<Mat4>,
    pub left_tip: [f64; 3],
    pub right_tip: [f64; 3],
}

pub fn fk_oracle(model: &ModelConfig, q: &[f64; 9]) -> OraclePoses {
    let mut bodies = vec![identity()];
    for (i, joint) in model.joints.iter().enumerate() {
        let body = &model.bodies[i + 1];
        let parent_name = body.parent.as_ref().expect("non-root body");
        let parent = model
            .bodies
            .iter()
            .position(|b| &b.name == parent_name)
            .expect("parent exists");
        let [r, p, y] = joint.rest_rpy_deg.map(f64::to_radians);
        let motion = match joint.kind {
            JointKind::Revolute => rotation(joint.axis, q[i]),
            JointKind::Prismatic => {
                let n = joint.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
                translation(joint.axis.map(|a| a / n * q[i]))
            }
        };
        let local = mul(&translation(body.offset), &mul(&rpy(r, p, y), &motion));
        bodies.push(mul(&bodies[parent], &local));
    }
    let left = model.bodies.iter().position(|b| b.name == "Grapple left").unwrap();
    let right = model.bodies.iter().position(|b| b.name == "Grapple right").unwrap();
    OraclePoses {
        left_tip: apply(&bodies[left], model.grapple.left_tip),
        right_tip: apply(&bodies[right], model.grapple.right_tip),
        bodies,
    }
}

/// Joint limits from the model file, in radians / meters.
pub fn oracle_limits(model: &ModelConfig) -> Vec<(f64, f64)> {
    model
        .joints
        .iter()
        .map(|j| match j.kind {
            JointKind::Revolute => (j.min.to_radians(), j.max.to_radians()),
            JointKind::Prismatic => (j.min, j.max),
        })
        .collect()
}

/// Largest deviation between the library's poses and the oracle's, over
/// positions, quaternion components and tips.
pub fn fk_error(chain: &logloader::KinematicChain, model: &ModelConfig, q: &[f64; 9]) -> f64 {
    let poses = chain.forward_kinematics(q).expect("in-limit configuration");
    let oracle = fk_oracle(model, q);
    let mut err: f64 = 0.0;
    for (iso, m) in poses.bodies.iter().zip(&oracle.bodies) {
        let t = iso.translation.vector;
        for k in 0..3 {
            err = err.max((t[k] - m[k][3]).abs());
        }
        let c = iso.rotation.as_ref().coords;
        let mut ql = [c[0], c[1], c[2], c[3]];
        if ql[3] < 0.0 {
            ql = ql.map(|v| -v);
        }
        let qo = quaternion(m);
        // Near w = 0 the two sign conventions can disagree; compare up to sign.
        let same: f64 = (0..4).map(|k| (ql[k] - qo[k]).abs()).fold(0.0, f64::max);
        let flip: f64 = (0..4).map(|k| (ql[k] + qo[k]).abs()).fold(0.0, f64::max);
        err = err.max(same.min(flip));
    }
    for k in 0..3 {
        err = err.max((poses.left_tip[k] - oracle.left_tip[k]).abs());
        err = err.max((poses.right_tip[k] - oracle.right_tip[k]).abs());
    }
    err
}

/// Advantages by direct summation: `A_t = Σ_k (γλ)^k δ_{t+k}` within one
/// episode, where the final step either terminates (`done`) or bootstraps
/// from `last_value`.
pub fn gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    done_at_end: bool,
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |t: usize| -> f64 {
        if t + 1 < n {
            values[t + 1]
        } else if done_at_end {
            0.0
        } else {
            last_value
        }
    };
    let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * next_value(t) - values[t]).collect();
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k])
                .sum()
        })
        .collect()
}

/// Central difference of `f` at `x[i]`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let fp = f(x);
    x[i] = orig - h;
    let fm = f(x);
    x[i] = orig;
    (fp - fm) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps entries that are zero
/// in exact arithmetic from dividing rounding noise by itself.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Dense forward pass over the documented parameter layout: per layer a
/// row-major `out × in` weight block then the bias; tanh on hidden layers.
pub fn mlp_forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    let layers = sizes.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let mut next = vec![0.0; n_out];
        for (o, out) in next.iter_mut().enumerate() {
            let mut z = params[off + n_in * n_out + o];
            for i in 0..n_in {
                z += params[off + o * n_in + i] * a[i];
            }
            *out = if l + 1 < layers { z.tanh() } else { z };
        }
        off += n_in * n_out + n_out;
        a = next;
    }
    a
}

/// Diagonal Gaussian log density.
pub fn gaussian_log_density(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..mean.len() {
        let sigma = log_std[k].exp();
        let z = (x[k] - mean[k]) / sigma;
        s += -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    s
}
