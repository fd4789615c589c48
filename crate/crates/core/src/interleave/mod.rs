//! Interleaving of solo and interaction motion into paired buckets:
//! retargeting, segment scheduling, rigid alignment at joins, orientation
//! checks, SLERP smoothing and text combination.

pub mod compose;
pub mod retarget;
pub mod schedule;
pub mod smooth;
pub mod text;

pub use compose::{compose, compose_pattern, compose_segments, fix_orientation, MotionBucket, PairClip, SegmentSource, SoloClip};
pub use retarget::retarget;
pub use schedule::{Pattern, Segment, SegmentKind, SegmentSchedule, BOUNDARY_RADIUS, MIN_SEGMENT_FRAMES};
pub use smooth::smooth_boundary;
pub use text::{combine_text, combine_texts, TextEmbedding, TEXT_DIM};
