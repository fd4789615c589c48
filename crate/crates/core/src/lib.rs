//! Interleaved solo/interaction motion synthesis.

pub mod diffusion;
pub mod error;
pub mod features;
pub mod geometry;
pub mod interleave;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod networks;
pub mod nn;
pub mod pipeline;
pub mod skeleton;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{slerp, Quaternion};
pub use motion::{Layout, MotionSequence, RootState, FEATURE_DIM};
pub use skeleton::Skeleton;
