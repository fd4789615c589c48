//! Motion sequences, root states, forward kinematics and start-pose
//! normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::Quaternion;
use crate::skeleton::{joints, Skeleton};

/// Width of one frame in the recursive feature representation.
pub const FEATURE_DIM: usize = 263;

/// How a sequence's frame data is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `joints` positions of three coordinates each, in meters.
    Joint { joints: usize },
    /// 263 recursive feature channels.
    Feature,
}

impl Layout {
    pub fn width(&self) -> usize {
        match self {
            Layout::Joint { joints } => joints * 3,
            Layout::Feature => FEATURE_DIM,
        }
    }
}

/// Per-frame data for one character.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    fps: f64,
    layout: Layout,
    frames: usize,
    data: Vec<f64>,
}

impl MotionSequence {
    pub fn new(fps: f64, layout: Layout, data: Vec<f64>) -> Result<Self> {
        let width = layout.width();
        if width == 0 || data.is_empty() || data.len() % width != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form whole frames of width {width}",
                data.len()
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("motion data".into()));
        }
        let frames = data.len() / width;
        Ok(Self { fps, layout, frames, data })
    }

    /// Joint-space sequence from per-frame joint positions.
    pub fn from_joint_frames(fps: f64, frames: &[Vec<Vec3>]) -> Result<Self> {
        let k = frames.first().map_or(0, |f| f.len());
        if frames.iter().any(|f| f.len() != k) {
            return Err(Error::ShapeMismatch("frames have differing joint counts".into()));
        }
        let data = frames.iter().flatten().flatten().copied().collect();
        Self::new(fps, Layout::Joint { joints: k }, data)
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let w = self.width();
        &self.data[f * w..(f + 1) * w]
    }

    /// Number of joints for joint-space data, or an error for features.
    pub fn joint_count(&self) -> Result<usize> {
        match self.layout {
            Layout::Joint { joints } => Ok(joints),
            Layout::Feature => Err(Error::ShapeMismatch("expected joint-space motion".into())),
        }
    }

    pub fn joint(&self, f: usize, k: usize) -> Vec3 {
        let w = self.width();
        let i = f * w + k * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// All joints of a frame as vectors.
    pub fn pose(&self, f: usize) -> Vec<Vec3> {
        self.frame(f).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    pub fn poses(&self) -> Vec<Vec<Vec3>> {
        (0..self.frames).map(|f| self.pose(f)).collect()
    }

    /// Frames `[start, end)` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames {
            return Err(Error::InvalidInput(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames
            )));
        }
        let w = self.width();
        Self::new(self.fps, self.layout, self.data[start * w..end * w].to_vec())
    }

    /// Applies `f` to every joint position (joint-space only).
    pub fn map_joints(&self, mut f: impl FnMut(Vec3) -> Vec3) -> Result<Self> {
        self.joint_count()?;
        let data = self
            .data
            .chunks_exact(3)
            .flat_map(|c| f([c[0], c[1], c[2]]))
            .collect();
        Self::new(self.fps, self.layout, data)
    }
}

/// Root placement of a character on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RootState {
    pub position: Vec3,
    /// Rotation about the vertical axis in (-pi, pi]; zero faces +y.
    pub heading: f64,
}

impl RootState {
    pub fn new(position: Vec3, heading: f64) -> Self {
        Self { position, heading: vec3::wrap_angle(heading) }
    }
}

/// Forward direction (unit, horizontal) implied by the hip joints of a pose.
///
/// Falls back to +y when the hips are vertically stacked.
pub fn facing_direction(pose: &[Vec3]) -> Vec3 {
    let across = vec3::sub(pose[joints::RIGHT_HIP], pose[joints::LEFT_HIP]);
    let f = vec3::cross(vec3::UP, across);
    vec3::normalize([f[0], f[1], 0.0]).unwrap_or([0.0, 1.0, 0.0])
}

/// Heading angle whose rotation maps +y onto `facing`.
pub fn heading_of(facing: Vec3) -> f64 {
    vec3::wrap_angle((-facing[0]).atan2(facing[1]))
}

/// Root states derived from joint positions: joint 0 and the hip facing.
pub fn root_states(seq: &MotionSequence) -> Result<Vec<RootState>> {
    let k = seq.joint_count()?;
    if k < 3 {
        return Err(Error::WrongJointCount { expected: 3, found: k });
    }
    Ok((0..seq.frames())
        .map(|f| {
            let pose = seq.pose(f);
            RootState::new(pose[0], heading_of(facing_direction(&pose)))
        })
        .collect())
}

/// Global joint positions from per-frame local rotations.
///
/// `local_rotations` holds `T*K` quaternions, frame-major. The root's global
/// rotation is its heading followed by its local rotation; every other joint
/// sits at its parent plus the parent's global rotation applied to its rest
/// offset.
pub fn fk_positions(sk: &Skeleton, local_rotations: &[Quaternion], roots: &[RootState], fps: f64) -> Result<MotionSequence> {
    let k = sk.joint_count();
    let t = roots.len();
    if t == 0 || local_rotations.len() != t * k {
        return Err(Error::ShapeMismatch(format!(
            "{} rotations for {t} frames of {k} joints",
            local_rotations.len()
        )));
    }
    let mut data = Vec::with_capacity(t * k * 3);
    let mut global = vec![Quaternion::IDENTITY; k];
    let mut pos = vec![[0.0; 3]; k];
    for (f, root) in roots.iter().enumerate() {
        let local = &local_rotations[f * k..(f + 1) * k];
        global[0] = Quaternion::from_heading(root.heading).mul(&local[0]).normalized();
        pos[0] = root.position;
        for j in 1..k {
            let p = sk.parent(j).expect("validated skeleton");
            pos[j] = vec3::add(pos[p], global[p].rotate(sk.offset(j)));
            global[j] = global[p].mul(&local[j]).normalized();
        }
        data.extend(pos.iter().flatten());
    }
    MotionSequence::new(fps, crate::motion::Layout::Joint { joints: k }, data)
}

/// Rigid transform: rotation about the vertical axis through `pivot`, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarRigid {
    pub pivot: Vec3,
    pub angle: f64,
    pub translation: Vec3,
}

impl PlanarRigid {
    pub const IDENTITY: PlanarRigid = PlanarRigid { pivot: [0.0; 3], angle: 0.0, translation: [0.0; 3] };

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = vec3::rotate_z(vec3::sub(p, self.pivot), self.angle);
        vec3::add(vec3::add(r, self.pivot), self.translation)
    }

    pub fn apply_seq(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        seq.map_joints(|p| self.apply(p))
    }
}

/// Moves frame 0's root to the planar origin and turns it to face +y.
///
/// Root height is kept so feet stay on the ground plane.
pub fn normalize_single(seq: &MotionSequence) -> Result<MotionSequence> {
    let root0 = root_states(seq)?[0];
    let tf = PlanarRigid {
        pivot: [root0.position[0], root0.position[1], 0.0],
        angle: -root0.heading,
        translation: [-root0.position[0], -root0.position[1], 0.0],
    };
    tf.apply_seq(seq)
}

/// Normalizes an interacting pair with one shared rigid transform: the
/// frame-0 root centroid moves to the planar origin and the first character
/// turns to face +y. Relative geometry between the two is untouched.
pub fn normalize_pair(a: &MotionSequence, b: &MotionSequence) -> Result<(MotionSequence, MotionSequence)> {
    if a.frames() != b.frames() || a.layout() != b.layout() {
        return Err(Error::ShapeMismatch("pair members differ in frames or layout".into()));
    }
    let ra = root_states(a)?[0];
    let rb = root_states(b)?[0];
    let centroid = vec3::scale(vec3::add(ra.position, rb.position), 0.5);
    let tf = PlanarRigid {
        pivot: [centroid[0], centroid[1], 0.0],
        angle: -ra.heading,
        translation: [-centroid[0], -centroid[1], 0.0],
    };
    Ok((tf.apply_seq(a)?, tf.apply_seq(b)?))
}
