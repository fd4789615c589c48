//! Corpus clips to encoded training buckets: retarget onto the canonical
//! body, normalize, compose on a schedule, smooth the joins and encode.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::encode;
use crate::interleave::{
    compose_segments, retarget, smooth_boundary, MotionBucket, PairClip, Pattern, SegmentKind, SegmentSchedule,
    SegmentSource, SoloClip, TextEmbedding, MIN_SEGMENT_FRAMES,
};
use crate::io::{pseudo_embed, Clip, ClipKind};
use crate::motion::{normalize_pair, normalize_single, root_states, MotionSequence, RootState};
use crate::skeleton::Skeleton;
use crate::training::{derive_seed, SampleKind};

/// Feature-space bucket plus what is needed to decode it back to joints.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBucket {
    pub kind: SampleKind,
    pub x: MotionSequence,
    /// Partner features; `None` for solo samples.
    pub y: Option<MotionSequence>,
    pub schedule: SegmentSchedule,
    pub text: TextEmbedding,
    pub boundary_mask: Vec<bool>,
    /// Frame-0 root of each character. Solo samples repeat the first.
    pub origins: [RootState; 2],
}

impl EncodedBucket {
    pub fn from_bucket(bucket: &MotionBucket) -> Result<Self> {
        Ok(Self {
            kind: SampleKind::Interleaved,
            x: encode(&bucket.u_x)?,
            y: Some(encode(&bucket.u_y)?),
            schedule: bucket.schedule.clone(),
            text: bucket.text_u.clone(),
            boundary_mask: bucket.boundary_mask.clone(),
            origins: [root_states(&bucket.u_x)?[0], root_states(&bucket.u_y)?[0]],
        })
    }

    pub fn from_solo(clip: &SoloClip) -> Result<Self> {
        let x = encode(&clip.motion)?;
        let frames = x.frames();
        let origin = root_states(&clip.motion)?[0];
        Ok(Self {
            kind: SampleKind::Solo,
            x,
            y: None,
            schedule: SegmentSchedule::single(SegmentKind::Solo, frames),
            text: clip.text.clone(),
            boundary_mask: vec![false; frames],
            origins: [origin, origin],
        })
    }

    pub fn frames(&self) -> usize {
        self.x.frames()
    }
}

/// Canonical-body clips ready for composition.
#[derive(Debug, Clone, Default)]
pub struct PreparedClips {
    pub solo: Vec<SoloClip>,
    pub pairs: Vec<PairClip>,
}

/// Retargets every clip onto the canonical skeleton, normalizes its
/// placement and embeds its text.
pub fn prepare_clips(clips: &[Clip]) -> Result<PreparedClips> {
    let canonical = Skeleton::canonical();
    let mut out = PreparedClips::default();
    for clip in clips {
        let moved = clip
            .motions
            .iter()
            .map(|m| retarget(m, &clip.skeleton, &canonical))
            .collect::<Result<Vec<_>>>()?;
        let text = pseudo_embed(&clip.text);
        match (clip.kind, moved.as_slice()) {
            (ClipKind::Solo, [m]) => out.solo.push(SoloClip { motion: normalize_single(m)?, text }),
            (ClipKind::Pair, [a, b]) => {
                let (x, y) = normalize_pair(a, b)?;
                out.pairs.push(PairClip { x, y, text });
            }
            (kind, ms) => return Err(Error::InvalidInput(format!("{kind:?} clip with {} motions", ms.len()))),
        }
    }
    Ok(out)
}

/// How segment boundaries are chosen for each bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Timing {
    /// Split frame drawn uniformly from `[20, T - 20]`. `first` fixes which
    /// segment opens the bucket; otherwise a coin flip decides.
    Random {
        #[serde(default)]
        first: Option<SegmentKind>,
    },
    Fixed { t_i: usize, t_s: Option<usize> },
    /// Equal shares over a tag list such as `s-i-s`.
    Pattern { pattern: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketPlan {
    pub buckets: usize,
    pub frames: usize,
    pub timing: Timing,
}

impl Default for BucketPlan {
    fn default() -> Self {
        Self { buckets: 64, frames: 196, timing: Timing::Random { first: Some(SegmentKind::Solo) } }
    }
}

impl BucketPlan {
    fn schedule(&self, rng: &mut ChaCha8Rng) -> Result<SegmentSchedule> {
        match &self.timing {
            Timing::Fixed { t_i, t_s } => SegmentSchedule::new(*t_i, *t_s, self.frames),
            Timing::Pattern { pattern } => {
                let s = SegmentSchedule::from_pattern(&pattern.parse::<Pattern>()?, self.frames)?;
                if let Some(w) = s.quality_warning() {
                    log::warn!("{w}");
                }
                Ok(s)
            }
            Timing::Random { first } => {
                if self.frames < 2 * MIN_SEGMENT_FRAMES {
                    return Err(Error::InvalidSchedule(format!(
                        "random timing needs at least {} frames",
                        2 * MIN_SEGMENT_FRAMES
                    )));
                }
                let split = rng.gen_range(MIN_SEGMENT_FRAMES..=self.frames - MIN_SEGMENT_FRAMES);
                let interaction_first = match first {
                    Some(kind) => *kind == SegmentKind::Interaction,
                    None => rng.gen_bool(0.5),
                };
                if interaction_first {
                    SegmentSchedule::new(0, Some(split), self.frames)
                } else {
                    SegmentSchedule::new(split, Some(0), self.frames)
                }
            }
        }
    }
}

/// Composed and smoothed joint-space buckets, one seeded draw each.
pub fn build_buckets(clips: &PreparedClips, plan: &BucketPlan, seed: u64) -> Result<Vec<MotionBucket>> {
    if clips.pairs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    (0..plan.buckets)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3, 0, b));
            let schedule = plan.schedule(&mut rng)?;
            let sources = schedule
                .segments()
                .iter()
                .map(|s| match s.kind {
                    SegmentKind::Interaction => Ok(SegmentSource::Interaction(clips.pairs.choose(&mut rng).expect("non-empty"))),
                    SegmentKind::Solo => clips
                        .solo
                        .choose(&mut rng)
                        .map(SegmentSource::Solo)
                        .ok_or(Error::TooFewSamples { needed: 1, got: 0 }),
                })
                .collect::<Result<Vec<_>>>()?;
            smooth_boundary(&compose_segments(&sources, &schedule)?)
        })
        .collect()
}
