//! Cross-skeleton retargeting of joint-space motion.
//!
//! Every bone is carried over as a parent-relative vector: the source bone
//! `j_k - j_parent(k)` is turned by the rest-pose rotation difference between
//! the skeletons and scaled by the bone-length ratio, then accumulated from the
//! shared root position. The alignment equations written in terms of absolute
//! joint positions reduce to this once the parent position is factored out.

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::Quaternion;
use crate::motion::{Layout, MotionSequence};
use crate::skeleton::Skeleton;

const REST_REFERENCE: Vec3 = [0.0, 0.0, 1.0];

/// Rest rotation of each bone relative to its parent, as the shortest arc
/// from a fixed reference axis onto the rest offset.
fn rest_rotations(sk: &Skeleton) -> Vec<Quaternion> {
    sk.offsets().iter().map(|o| Quaternion::from_to(REST_REFERENCE, *o)).collect()
}

/// Per-bone rotation taking `src` rest directions onto `dst` rest directions.
pub fn relative_rotations(src: &Skeleton, dst: &Skeleton) -> Result<Vec<Quaternion>> {
    if !src.same_topology(dst) {
        return Err(Error::TopologyMismatch);
    }
    let (qs, qd) = (rest_rotations(src), rest_rotations(dst));
    qd.iter().zip(&qs).map(|(d, s)| Ok(d.mul(&s.inverse()?).normalized())).collect()
}

/// Moves `src_seq` from `src_sk` onto `dst_sk`.
///
/// The length ratio uses the source bone's measured length on each frame, so
/// output bones match the destination rest lengths even when the source
/// drifts from its own rest lengths.
pub fn retarget(src_seq: &MotionSequence, src_sk: &Skeleton, dst_sk: &Skeleton) -> Result<MotionSequence> {
    let k = src_seq.joint_count()?;
    if k != src_sk.joint_count() {
        return Err(Error::WrongJointCount { expected: src_sk.joint_count(), found: k });
    }
    let rel = relative_rotations(src_sk, dst_sk)?;
    let mut data = Vec::with_capacity(src_seq.data().len());
    let mut out = vec![[0.0; 3]; k];
    for f in 0..src_seq.frames() {
        let pose = src_seq.pose(f);
        out[0] = pose[0];
        for j in 1..k {
            let p = src_sk.parent(j).expect("validated skeleton");
            let bone = vec3::sub(pose[j], pose[p]);
            let len = vec3::norm(bone);
            if len < 1e-9 {
                return Err(Error::DegenerateBone { joint: j, frame: f, length: len });
            }
            let ratio = dst_sk.bone_length(j) / len;
            out[j] = vec3::add(out[p], vec3::scale(rel[j].rotate(bone), ratio));
        }
        data.extend(out.iter().flatten());
    }
    MotionSequence::new(src_seq.fps(), Layout::Joint { joints: k }, data)
}
