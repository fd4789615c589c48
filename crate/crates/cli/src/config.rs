//! Run configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use intersyn_core::diffusion::ScheduleDescriptor;
use intersyn_core::interleave::{Pattern, SegmentSchedule, MIN_SEGMENT_FRAMES};
use intersyn_core::io::SynthConfig;
use intersyn_core::metrics::{FID_MIN_SAMPLES, MMODALITY_MIN_SAMPLES, R_PRECISION_POOL};
use intersyn_core::networks::{CoordinatorArch, DenoiserArch};
use intersyn_core::pipeline::{BucketPlan, Timing};
use intersyn_core::training::{LossWeights, TrainConfig};

use crate::error::{CliError, CliResult};

/// The published JSON schema for [`RunConfig`] files.
pub const SCHEMA: &str = include_str!("../schema/run-config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub solo: usize,
    pub pairs: usize,
    pub frames: usize,
    pub fps: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self { solo: d.solo, pairs: d.pairs, frames: d.frames, fps: d.fps }
    }
}

impl SynthSection {
    pub fn to_config(&self) -> SynthConfig {
        SynthConfig { solo: self.solo, pairs: self.pairs, frames: self.frames, fps: self.fps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterleaveSection {
    pub buckets: usize,
    pub frames: usize,
    pub timing: Timing,
    /// Also emit every solo clip as a single-character training sample.
    pub solo_samples: bool,
}

impl Default for InterleaveSection {
    fn default() -> Self {
        let p = BucketPlan::default();
        Self { buckets: p.buckets, frames: p.frames, timing: p.timing, solo_samples: true }
    }
}

impl InterleaveSection {
    pub fn plan(&self) -> BucketPlan {
        BucketPlan { buckets: self.buckets, frames: self.frames, timing: self.timing.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    /// DDIM steps taken out of the full schedule.
    pub substeps: usize,
    pub eta: f64,
    /// Run the coordinator after denoising when the checkpoint has one.
    pub refine: bool,
    /// Characters to generate; more than two uses cyclic refinement.
    pub people: usize,
    pub iterations: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { substeps: 50, eta: 0.0, refine: true, people: 2, iterations: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Held-out buckets to generate and compare against.
    pub buckets: usize,
    /// Prompts that get repeated generations for MModality.
    pub prompts: usize,
    pub per_prompt: usize,
    pub extractor_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { buckets: 160, prompts: 4, per_prompt: 10, extractor_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it and every stage derives from it.
    pub seed: u64,
    pub synth: SynthSection,
    pub interleave: InterleaveSection,
    pub diffusion: ScheduleDescriptor,
    pub denoiser: DenoiserArch,
    pub coordinator: CoordinatorArch,
    pub loss: LossWeights,
    pub train: TrainConfig,
    /// Coordinator training; absent or null skips the second stage.
    pub refine: Option<TrainConfig>,
    pub sample: SampleSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthSection::default(),
            interleave: InterleaveSection::default(),
            diffusion: ScheduleDescriptor::default(),
            denoiser: DenoiserArch::default(),
            coordinator: CoordinatorArch::default(),
            loss: LossWeights::default(),
            train: TrainConfig::default(),
            refine: Some(TrainConfig::default()),
            sample: SampleSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` if given, otherwise the defaults; `seed` overrides.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        if let Some(r) = &mut cfg.refine {
            r.seed = cfg.seed;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.synth.frames < 2 || !(self.synth.fps > 0.0) {
            return Err(invalid("synth.frames must be at least 2 and synth.fps positive"));
        }
        let il = &self.interleave;
        if il.buckets == 0 {
            return Err(invalid("interleave.buckets must be positive"));
        }
        match &il.timing {
            Timing::Fixed { t_i, t_s } => {
                SegmentSchedule::new(*t_i, *t_s, il.frames)?;
            }
            Timing::Pattern { pattern } => {
                SegmentSchedule::from_pattern(&pattern.parse::<Pattern>()?, il.frames)?;
            }
            Timing::Random { .. } => {
                if il.frames < 2 * MIN_SEGMENT_FRAMES {
                    return Err(invalid(format!("random timing needs interleave.frames >= {}", 2 * MIN_SEGMENT_FRAMES)));
                }
            }
        }
        if il.frames > self.synth.frames {
            return Err(invalid(format!(
                "interleave.frames = {} exceeds synth.frames = {}; segments could outrun their clips",
                il.frames, self.synth.frames
            )));
        }
        intersyn_core::diffusion::DiffusionSchedule::from_descriptor(&self.diffusion)?;
        self.denoiser.validate()?;
        self.coordinator.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        if let Some(r) = &self.refine {
            r.validate()?;
        }
        let s = &self.sample;
        if s.substeps == 0 || s.substeps > self.diffusion.steps {
            return Err(invalid(format!("sample.substeps must lie in [1, {}]", self.diffusion.steps)));
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return Err(invalid("sample.eta must lie in [0, 1]"));
        }
        if s.people < 2 || s.iterations == 0 {
            return Err(invalid("sample.people must be at least 2 and sample.iterations positive"));
        }
        let e = &self.eval;
        if e.buckets < FID_MIN_SAMPLES.max(R_PRECISION_POOL) {
            return Err(invalid(format!("eval.buckets must be at least {FID_MIN_SAMPLES}")));
        }
        if e.prompts == 0 || e.per_prompt < MMODALITY_MIN_SAMPLES || e.prompts > e.buckets {
            return Err(invalid(format!(
                "eval needs 1..=buckets prompts with at least {MMODALITY_MIN_SAMPLES} generations each"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_schedules() {
        assert!(RunConfig::from_json(r#"{"sede": 1}"#).is_err());
        let bad = r#"{"interleave": {"timing": {"mode": "fixed", "t_i": 30, "t_s": 40}}}"#;
        let msg = RunConfig::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("t_i * t_s = 0"), "{msg}");
    }

    #[test]
    fn seed_override_reaches_training() {
        let cfg = RunConfig::resolve(None, Some(9)).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.refine.unwrap().seed), (9, 9, 9));
    }
}
