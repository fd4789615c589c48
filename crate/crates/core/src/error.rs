use thiserror::Error;

/// Errors produced anywhere in the synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {0:e} is too small to invert")]
    ZeroNorm(f64),
    #[error("quaternion is not unit length (norm {0})")]
    NonUnit(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected {expected} joints, found {found}")]
    WrongJointCount { expected: usize, found: usize },
    #[error("expected feature width {expected}, found {found}")]
    WrongWidth { expected: usize, found: usize },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("skeleton topologies differ")]
    TopologyMismatch,
    #[error("bone {joint} has degenerate length {length:e} at frame {frame}")]
    DegenerateBone { joint: usize, frame: usize, length: f64 },
    #[error("invalid segment schedule: {0}")]
    InvalidSchedule(String),
    #[error("segment needs {needed} frames but the source clip has {available}")]
    ScheduleOverflow { needed: usize, available: usize },
    #[error("sequences do not share a skeleton: {0}")]
    SkeletonMismatch(String),
    #[error("pattern of {segments} segments leaves {share} frames per segment (minimum {minimum})")]
    PatternTooLong { segments: usize, share: usize, minimum: usize },
    #[error("diffusion schedule needs at least 2 steps, got {0}")]
    BadSteps(usize),
    #[error("invalid diffusion step {step}: {reason}")]
    BadStep { step: usize, reason: &'static str },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("every frame is masked; nothing to score")]
    AllMasked,
    #[error("cannot decode features to joint space: {0}")]
    DecodeFailure(String),
    #[error("training diverged at stage {stage}, epoch {epoch}")]
    DivergenceDetected { stage: u8, epoch: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by numeric blow-up rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::DivergenceDetected { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
