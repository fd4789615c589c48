//! Building interleaved buckets from solo and interaction clips.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::motion::{root_states, Layout, MotionSequence, PlanarRigid};
use crate::skeleton::joints;

use super::schedule::{Pattern, SegmentKind, SegmentSchedule};
use super::text::{combine_texts, TextEmbedding};

/// One character's solo motion with its description.
#[derive(Debug, Clone)]
pub struct SoloClip {
    pub motion: MotionSequence,
    pub text: TextEmbedding,
}

/// Two interacting characters with their shared description.
#[derive(Debug, Clone)]
pub struct PairClip {
    pub x: MotionSequence,
    pub y: MotionSequence,
    pub text: TextEmbedding,
}

/// Source clip for one schedule segment.
#[derive(Debug, Clone, Copy)]
pub enum SegmentSource<'a> {
    Solo(&'a SoloClip),
    Interaction(&'a PairClip),
}

impl SegmentSource<'_> {
    fn kind(&self) -> SegmentKind {
        match self {
            SegmentSource::Solo(_) => SegmentKind::Solo,
            SegmentSource::Interaction(_) => SegmentKind::Interaction,
        }
    }

    fn text(&self) -> &TextEmbedding {
        match self {
            SegmentSource::Solo(c) => &c.text,
            SegmentSource::Interaction(c) => &c.text,
        }
    }

    fn primary(&self) -> &MotionSequence {
        match self {
            SegmentSource::Solo(c) => &c.motion,
            SegmentSource::Interaction(c) => &c.x,
        }
    }
}

/// A paired interleaved sequence: `u_x` alternates solo and interaction
/// motion, `u_y` is the partner.
#[derive(Debug, Clone)]
pub struct MotionBucket {
    pub u_x: MotionSequence,
    pub u_y: MotionSequence,
    pub schedule: SegmentSchedule,
    pub text_u: TextEmbedding,
    /// True on frames excluded from the reconstruction loss.
    pub boundary_mask: Vec<bool>,
}

impl MotionBucket {
    pub fn frames(&self) -> usize {
        self.schedule.total()
    }
}

/// Facing normal of a pose: cross product of the root-to-hip vectors.
pub fn hip_normal(pose: &[Vec3]) -> Vec3 {
    let root = pose[joints::PELVIS];
    vec3::cross(vec3::sub(pose[joints::LEFT_HIP], root), vec3::sub(pose[joints::RIGHT_HIP], root))
}

/// Half-turn about the vertical through the first root of the inserted
/// clip when its facing normal opposes the previous clip's last frame.
pub fn orientation_fix(prev_last_frame: &[Vec3], next_first_frame: &[Vec3]) -> Option<PlanarRigid> {
    let d = vec3::dot(hip_normal(prev_last_frame), hip_normal(next_first_frame));
    (d < 0.0).then(|| {
        let r = next_first_frame[joints::PELVIS];
        PlanarRigid { pivot: [r[0], r[1], 0.0], angle: PI, translation: [0.0; 3] }
    })
}

/// Returns `next_seq`, turned by 180 degrees about the vertical axis through
/// its first root if the join frames face opposite ways.
pub fn fix_orientation(prev_last_frame: &[Vec3], next_first_frame: &[Vec3], next_seq: &MotionSequence) -> Result<MotionSequence> {
    match orientation_fix(prev_last_frame, next_first_frame) {
        Some(tf) => tf.apply_seq(next_seq),
        None => Ok(next_seq.clone()),
    }
}

fn check_compatible(sources: &[SegmentSource<'_>]) -> Result<(usize, f64)> {
    let first = sources.first().ok_or_else(|| Error::InvalidSchedule("no segments".into()))?.primary();
    let k = first.joint_count()?;
    let fps = first.fps();
    for s in sources {
        let seqs: Vec<&MotionSequence> = match s {
            SegmentSource::Solo(c) => vec![&c.motion],
            SegmentSource::Interaction(c) => vec![&c.x, &c.y],
        };
        for q in seqs {
            if q.layout() != (Layout::Joint { joints: k }) {
                return Err(Error::SkeletonMismatch(format!("expected {k} joints, got layout {:?}", q.layout())));
            }
            if q.fps() != fps {
                return Err(Error::SkeletonMismatch(format!("frame rates {fps} and {} differ", q.fps())));
            }
        }
        if let SegmentSource::Interaction(c) = s {
            if c.x.frames() != c.y.frames() {
                return Err(Error::ShapeMismatch("pair members differ in length".into()));
            }
        }
    }
    Ok((k, fps))
}

/// Lays sources onto the schedule. Each segment plays its clip from the
/// clip's first frame; every segment after the first is rigidly moved so its
/// first root state equals the previous segment's last root state, then
/// orientation-checked. Interaction partners share their segment's transform.
/// During solo segments the partner holds its nearest interaction pose.
pub fn compose_segments(sources: &[SegmentSource<'_>], schedule: &SegmentSchedule) -> Result<MotionBucket> {
    let segments = schedule.segments();
    if sources.len() != segments.len() {
        return Err(Error::InvalidSchedule(format!(
            "{} sources for {} segments",
            sources.len(),
            segments.len()
        )));
    }
    for (src, seg) in sources.iter().zip(segments) {
        if src.kind() != seg.kind {
            return Err(Error::InvalidSchedule(format!("segment at {} expects {:?}", seg.start, seg.kind)));
        }
    }
    if !segments.iter().any(|s| s.kind == SegmentKind::Interaction) {
        return Err(Error::InvalidSchedule("a bucket needs an interaction segment".into()));
    }
    let (_, fps) = check_compatible(sources)?;
    let total = schedule.total();

    let mut ux: Vec<Vec<Vec3>> = Vec::with_capacity(total);
    let mut uy: Vec<Option<Vec<Vec3>>> = Vec::with_capacity(total);
    for (src, seg) in sources.iter().zip(segments) {
        let len = seg.len();
        let primary = src.primary();
        if primary.frames() < len {
            return Err(Error::ScheduleOverflow { needed: len, available: primary.frames() });
        }
        let mut x = primary.slice(0, len)?;
        let mut y = match src {
            SegmentSource::Interaction(c) => Some(c.y.slice(0, len)?),
            SegmentSource::Solo(_) => None,
        };
        if let Some(prev_pose) = ux.last() {
            let prev_root = root_states(&MotionSequence::from_joint_frames(fps, std::slice::from_ref(prev_pose))?)?[0];
            let next_root = root_states(&x)?[0];
            let align = PlanarRigid {
                pivot: next_root.position,
                angle: vec3::wrap_angle(prev_root.heading - next_root.heading),
                translation: vec3::sub(prev_root.position, next_root.position),
            };
            x = align.apply_seq(&x)?;
            y = y.map(|y| align.apply_seq(&y)).transpose()?;
            if let Some(flip) = orientation_fix(prev_pose, &x.pose(0)) {
                x = flip.apply_seq(&x)?;
                y = y.map(|y| flip.apply_seq(&y)).transpose()?;
            }
        }
        ux.extend(x.poses());
        match y {
            Some(y) => uy.extend(y.poses().into_iter().map(Some)),
            None => uy.extend(std::iter::repeat(None).take(len)),
        }
    }

    let held: Vec<Vec<Vec3>> = (0..total)
        .map(|f| match &uy[f] {
            Some(p) => p.clone(),
            None => nearest_filled(&uy, f).clone(),
        })
        .collect();

    let texts: Vec<&TextEmbedding> = sources.iter().map(|s| s.text()).collect();
    Ok(MotionBucket {
        u_x: MotionSequence::from_joint_frames(fps, &ux)?,
        u_y: MotionSequence::from_joint_frames(fps, &held)?,
        boundary_mask: schedule.boundary_mask(),
        schedule: schedule.clone(),
        text_u: combine_texts(&texts),
    })
}

fn nearest_filled(frames: &[Option<Vec<Vec3>>], f: usize) -> &Vec<Vec3> {
    (1..frames.len())
        .flat_map(|d| [f.checked_sub(d), Some(f + d)])
        .flatten()
        .find_map(|i| frames.get(i).and_then(|p| p.as_ref()))
        .expect("an interaction segment exists")
}

/// Two-segment composition of an interaction pair and a solo clip.
pub fn compose(pair: &PairClip, solo: &SoloClip, schedule: &SegmentSchedule) -> Result<MotionBucket> {
    let sources: Vec<SegmentSource<'_>> = schedule
        .segments()
        .iter()
        .map(|s| match s.kind {
            SegmentKind::Solo => SegmentSource::Solo(solo),
            SegmentKind::Interaction => SegmentSource::Interaction(pair),
        })
        .collect();
    compose_segments(&sources, schedule)
}

/// Composition over a multi-segment pattern with equal frame shares.
pub fn compose_pattern(sources: &[SegmentSource<'_>], pattern: &Pattern, total: usize) -> Result<MotionBucket> {
    let schedule = SegmentSchedule::from_pattern(pattern, total)?;
    if let Some(w) = schedule.quality_warning() {
        log::warn!("{w}");
    }
    compose_segments(sources, &schedule)
}
