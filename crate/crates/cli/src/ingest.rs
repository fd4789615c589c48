//! Adapter from external joint-position exports to corpus clips.
//!
//! Expected input per character: `T x 22 x 3` joint positions in meters,
//! y-up, facing +z, joints in the HumanML3D/SMPL order (pelvis, left hip,
//! right hip, spine1, left knee, right knee, spine2, left ankle, right
//! ankle, spine3, left foot, right foot, neck, left collar, right collar,
//! head, left shoulder, right shoulder, left elbow, right elbow, left wrist,
//! right wrist). InterHuman pairs supply two such arrays over the same
//! frames plus one description. Frame rates are carried through unchanged.
//!
//! Positions map to this crate's z-up, +y-facing frame by
//! `(x, y, z) -> (-x, z, y)`, a proper rotation. The source skeleton keeps
//! canonical rest directions with each bone's mean measured length, so
//! retargeting onto the canonical body only rescales bones.

use intersyn_core::geometry::vec3::{self, Vec3};
use intersyn_core::io::{Clip, ClipKind};
use intersyn_core::motion::{Layout, MotionSequence};
use intersyn_core::skeleton::{Skeleton, CANONICAL_JOINTS};
use intersyn_core::Error;

use crate::error::{CliError, CliResult};

pub fn y_up_to_z_up(p: Vec3) -> Vec3 {
    [-p[0], p[2], p[1]]
}

/// A skeleton with canonical rest directions and mean bone lengths of `seqs`.
pub fn measured_skeleton(seqs: &[MotionSequence]) -> CliResult<Skeleton> {
    let canonical = Skeleton::canonical();
    let mut offsets = canonical.offsets().to_vec();
    for (j, off) in offsets.iter_mut().enumerate().skip(1) {
        let p = canonical.parent(j).expect("non-root joint");
        let (mut sum, mut n) = (0.0, 0usize);
        for s in seqs {
            for f in 0..s.frames() {
                sum += vec3::dist(s.joint(f, j), s.joint(f, p));
                n += 1;
            }
        }
        let len = sum / n.max(1) as f64;
        if !(len > 1e-6) {
            return Err(Error::DegenerateBone { joint: j, frame: 0, length: len }.into());
        }
        *off = vec3::scale(*off, len / canonical.bone_length(j));
    }
    Ok(Skeleton::new(canonical.parents().to_vec(), offsets, canonical.names().map(|n| n.to_vec()))?)
}

/// Builds a clip from y-up position arrays, one per character.
pub fn clip_from_y_up(text: &str, characters: &[Vec<f64>], fps: f64) -> CliResult<Clip> {
    let kind = match characters.len() {
        1 => ClipKind::Solo,
        2 => ClipKind::Pair,
        n => return Err(CliError::Config(format!("expected 1 or 2 characters, got {n}"))),
    };
    let motions = characters
        .iter()
        .map(|data| {
            let z_up: Vec<f64> = data.chunks_exact(3).flat_map(|c| y_up_to_z_up([c[0], c[1], c[2]])).collect();
            MotionSequence::new(fps, Layout::Joint { joints: CANONICAL_JOINTS }, z_up)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if motions.iter().any(|m| m.frames() != motions[0].frames()) {
        return Err(CliError::Config("pair members differ in frame count".into()));
    }
    Ok(Clip { kind, text: text.into(), skeleton: measured_skeleton(&motions)?, motions })
}
