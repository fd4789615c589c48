//! SLERP smoothing of segment joins.

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::{slerp, Quaternion};
use crate::motion::MotionSequence;
use crate::skeleton::Skeleton;

use super::compose::MotionBucket;

/// Re-synthesizes the interior of every boundary window of both characters.
///
/// Window edges are the frames `b - 5` and `b + 5` (clipped). Inside, the
/// root moves linearly between the edge positions and each bone turns along
/// the geodesic between its edge orientations, with lengths interpolated
/// linearly. Frames outside windows are untouched.
pub fn smooth_boundary(bucket: &MotionBucket) -> Result<MotionBucket> {
    let sk = Skeleton::canonical();
    let windows: Vec<_> = bucket.schedule.boundaries().into_iter().map(|b| bucket.schedule.window(b)).collect();
    Ok(MotionBucket {
        u_x: smooth_windows(&bucket.u_x, &sk, &windows)?,
        u_y: smooth_windows(&bucket.u_y, &sk, &windows)?,
        ..bucket.clone()
    })
}

/// Smooths the given `[lo, hi]` windows of a joint-space sequence.
pub fn smooth_windows(seq: &MotionSequence, sk: &Skeleton, windows: &[(usize, usize)]) -> Result<MotionSequence> {
    let k = seq.joint_count()?;
    if k != sk.joint_count() {
        return Err(Error::WrongJointCount { expected: sk.joint_count(), found: k });
    }
    let mut poses = seq.poses();
    for &(lo, hi) in windows {
        if hi >= poses.len() || hi < lo + 2 {
            continue;
        }
        let (a, b) = (poses[lo].clone(), poses[hi].clone());
        let bones: Vec<(Vec3, f64, Quaternion, f64)> = (1..k)
            .map(|j| {
                let p = sk.parent(j).expect("validated skeleton");
                let da = vec3::sub(a[j], a[p]);
                let db = vec3::sub(b[j], b[p]);
                let dir = vec3::normalize(da).unwrap_or([0.0, 0.0, 1.0]);
                (dir, vec3::norm(da), Quaternion::from_to(da, db), vec3::norm(db))
            })
            .collect();
        for f in lo + 1..hi {
            let t = (f - lo) as f64 / (hi - lo) as f64;
            let mut pose = vec![[0.0; 3]; k];
            pose[0] = vec3::lerp(a[0], b[0], t);
            for j in 1..k {
                let p = sk.parent(j).expect("validated skeleton");
                let (dir, la, turn, lb) = bones[j - 1];
                let q = slerp(&Quaternion::IDENTITY, &turn, t);
                let len = la + (lb - la) * t;
                pose[j] = vec3::add(pose[p], vec3::scale(q.rotate(dir), len));
            }
            poses[f] = pose;
        }
    }
    MotionSequence::from_joint_frames(seq.fps(), &poses)
}
