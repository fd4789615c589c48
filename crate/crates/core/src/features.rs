//! The 263-channel recursive per-frame motion encoding.
//!
//! Channel layout of one frame (z-up, headings about z, velocities per frame):
//!
//! | range       | width | content                                                    |
//! |-------------|-------|------------------------------------------------------------|
//! | `0`         | 1     | root angular velocity about the vertical axis (rad/frame)  |
//! | `1..3`      | 2     | root planar velocity expressed in the root heading frame   |
//! | `3`         | 1     | root height                                                |
//! | `4..67`     | 63    | joints 1..21 relative to the root, in the heading frame    |
//! | `67..193`   | 126   | joints 1..21 bone rotations as 6D (first two matrix columns)|
//! | `193..259`  | 66    | joints 0..21 velocities in the heading frame               |
//! | `259..263`  | 4     | foot contacts: left ankle, left foot, right ankle, right foot |
//!
//! Velocities are forward differences; the last frame repeats the previous
//! frame's value. Decoding integrates the root channels from a start state
//! (origin facing +y unless given).

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::Quaternion;
use crate::motion::{Layout, MotionSequence, RootState, FEATURE_DIM};
use crate::skeleton::{joints, Skeleton, CANONICAL_JOINTS};

pub const ROOT_ANG_VEL: usize = 0;
pub const ROOT_LIN_VEL: usize = 1;
pub const ROOT_HEIGHT: usize = 3;
pub const LOCAL_POS: usize = 4;
pub const ROT_6D: usize = LOCAL_POS + (CANONICAL_JOINTS - 1) * 3;
pub const JOINT_VEL: usize = ROT_6D + (CANONICAL_JOINTS - 1) * 6;
pub const FOOT_CONTACT: usize = JOINT_VEL + CANONICAL_JOINTS * 3;

/// Foot joints feeding the contact channels, in channel order.
pub const CONTACT_JOINTS: [usize; 4] = [joints::LEFT_ANKLE, joints::LEFT_FOOT, joints::RIGHT_ANKLE, joints::RIGHT_FOOT];

/// Per-frame speed (m/frame) below which a foot joint counts as planted.
pub const CONTACT_SPEED: f64 = 0.02;

const _: () = assert!(FOOT_CONTACT + 4 == FEATURE_DIM);

/// Forward difference with the last frame repeating its predecessor.
fn forward_diff_index(n: usize, frames: usize) -> Option<usize> {
    match frames {
        1 => None,
        _ if n + 1 < frames => Some(n),
        _ => Some(frames - 2),
    }
}

/// Encodes canonical joint-space motion with its per-frame root states.
pub fn encode_features(seq: &MotionSequence, roots: &[RootState]) -> Result<MotionSequence> {
    let k = seq.joint_count()?;
    if k != CANONICAL_JOINTS {
        return Err(Error::WrongJointCount { expected: CANONICAL_JOINTS, found: k });
    }
    let t = seq.frames();
    if roots.len() != t {
        return Err(Error::ShapeMismatch(format!("{} root states for {t} frames", roots.len())));
    }
    let sk = Skeleton::canonical();
    let poses = seq.poses();
    let mut out = vec![0.0; t * FEATURE_DIM];
    for n in 0..t {
        let row = &mut out[n * FEATURE_DIM..(n + 1) * FEATURE_DIM];
        let heading = roots[n].heading;
        let root = roots[n].position;
        if let Some(d) = forward_diff_index(n, t) {
            row[ROOT_ANG_VEL] = vec3::wrap_angle(roots[d + 1].heading - roots[d].heading);
            let step = vec3::sub(roots[d + 1].position, roots[d].position);
            let local = vec3::rotate_z([step[0], step[1], 0.0], -roots[d].heading);
            row[ROOT_LIN_VEL] = local[0];
            row[ROOT_LIN_VEL + 1] = local[1];
            for j in 0..k {
                let v = vec3::rotate_z(vec3::sub(poses[d + 1][j], poses[d][j]), -roots[d].heading);
                row[JOINT_VEL + 3 * j..JOINT_VEL + 3 * j + 3].copy_from_slice(&v);
            }
            for (c, &j) in CONTACT_JOINTS.iter().enumerate() {
                let speed = vec3::dist(poses[d + 1][j], poses[d][j]);
                row[FOOT_CONTACT + c] = if speed < CONTACT_SPEED { 1.0 } else { 0.0 };
            }
        } else {
            row[FOOT_CONTACT..FOOT_CONTACT + 4].fill(1.0);
        }
        row[ROOT_HEIGHT] = root[2];
        for j in 1..k {
            let rel = vec3::rotate_z(vec3::sub(poses[n][j], root), -heading);
            let i = LOCAL_POS + 3 * (j - 1);
            row[i..i + 3].copy_from_slice(&rel);
            let p = sk.parent(j).expect("canonical");
            let bone = vec3::rotate_z(vec3::sub(poses[n][j], poses[n][p]), -heading);
            let m = Quaternion::from_to(sk.offset(j), bone).to_rot()?;
            let i = ROT_6D + 6 * (j - 1);
            row[i..i + 6].copy_from_slice(&[m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]);
        }
    }
    MotionSequence::new(seq.fps(), Layout::Feature, out)
}

/// Encodes using root states derived from the hips.
pub fn encode(seq: &MotionSequence) -> Result<MotionSequence> {
    let roots = crate::motion::root_states(seq)?;
    encode_features(seq, &roots)
}

/// Decodes features starting from the origin facing +y.
pub fn decode_features(seq: &MotionSequence) -> Result<(MotionSequence, Vec<RootState>)> {
    decode_features_from(seq, RootState::default())
}

/// Decodes features, integrating the root trajectory from `start`.
pub fn decode_features_from(seq: &MotionSequence, start: RootState) -> Result<(MotionSequence, Vec<RootState>)> {
    if seq.layout() != Layout::Feature {
        return Err(Error::WrongWidth { expected: FEATURE_DIM, found: seq.width() });
    }
    let roots = integrate_roots(seq.data(), start);
    let mut data = Vec::with_capacity(seq.frames() * CANONICAL_JOINTS * 3);
    for (n, root) in roots.iter().enumerate() {
        let row = seq.frame(n);
        data.extend_from_slice(&root.position);
        for j in 1..CANONICAL_JOINTS {
            let i = LOCAL_POS + 3 * (j - 1);
            let p = vec3::add(root.position, vec3::rotate_z([row[i], row[i + 1], row[i + 2]], root.heading));
            data.extend_from_slice(&p);
        }
    }
    let joints = MotionSequence::new(seq.fps(), Layout::Joint { joints: CANONICAL_JOINTS }, data)?;
    Ok((joints, roots))
}

/// Accumulates root velocities into per-frame root states.
///
/// Headings are kept unwrapped during integration so the trajectory is a
/// plain running sum; the returned states are wrapped.
pub fn integrate_roots(features: &[f64], start: RootState) -> Vec<RootState> {
    let t = features.len() / FEATURE_DIM;
    let mut out = Vec::with_capacity(t);
    let mut heading = start.heading;
    let mut planar = [start.position[0], start.position[1]];
    for n in 0..t {
        let row = &features[n * FEATURE_DIM..(n + 1) * FEATURE_DIM];
        out.push(RootState::new([planar[0], planar[1], row[ROOT_HEIGHT]], heading));
        let v = vec3::rotate_z([row[ROOT_LIN_VEL], row[ROOT_LIN_VEL + 1], 0.0], heading);
        planar[0] += v[0];
        planar[1] += v[1];
        heading += row[ROOT_ANG_VEL];
    }
    out
}

/// Joint positions of one decoded frame given its root state.
pub fn frame_joints(row: &[f64], root: &RootState) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(CANONICAL_JOINTS);
    out.push(root.position);
    for j in 1..CANONICAL_JOINTS {
        let i = LOCAL_POS + 3 * (j - 1);
        out.push(vec3::add(root.position, vec3::rotate_z([row[i], row[i + 1], row[i + 2]], root.heading)));
    }
    out
}
