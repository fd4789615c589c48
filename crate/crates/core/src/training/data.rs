//! Normalized training samples built from buckets and solo clips.

use serde::{Deserialize, Serialize};

use super::losses::{boundary_windows, distance_map};
use crate::error::{Error, Result};
use crate::features::encode;
use crate::interleave::{MotionBucket, SoloClip};
use crate::pipeline::EncodedBucket;
use crate::motion::{MotionSequence, RootState, FEATURE_DIM};
use crate::networks::{Conditioning, PAIR_DIM};
use crate::nn::{Graph, Tensor};

/// Smallest standard deviation used when normalizing a channel.
pub const MIN_STD: f64 = 1e-3;

/// Per-channel mean and standard deviation of the 263 feature channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity() -> Self {
        Self { mean: vec![0.0; FEATURE_DIM], std: vec![1.0; FEATURE_DIM] }
    }

    /// Fits statistics over every frame of the given feature sequences.
    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a MotionSequence>) -> Result<Self> {
        let mut sum = vec![0.0; FEATURE_DIM];
        let mut sq = vec![0.0; FEATURE_DIM];
        let mut n = 0usize;
        for s in seqs {
            if s.width() != FEATURE_DIM {
                return Err(Error::WrongWidth { expected: FEATURE_DIM, found: s.width() });
            }
            for row in s.data().chunks(FEATURE_DIM) {
                for c in 0..FEATURE_DIM {
                    sum[c] += row[c];
                    sq[c] += row[c] * row[c];
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(MIN_STD))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_DIM || self.std.len() != FEATURE_DIM {
            return Err(Error::ShapeMismatch("feature statistics must have 263 channels".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("feature statistics must be finite with positive deviations".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.chunks(FEATURE_DIM)
            .flat_map(|row| row.iter().enumerate().map(|(c, v)| (v - self.mean[c]) / self.std[c]))
            .collect()
    }

    pub fn denormalize(&self, norm: &[f64]) -> Vec<f64> {
        norm.chunks(FEATURE_DIM)
            .flat_map(|row| row.iter().enumerate().map(|(c, v)| v * self.std[c] + self.mean[c]))
            .collect()
    }

    /// `1 x 263` rows for scaling inside a graph.
    pub fn rows(&self) -> (Tensor, Tensor) {
        (
            Tensor { rows: 1, cols: FEATURE_DIM, data: self.std.clone() },
            Tensor { rows: 1, cols: FEATURE_DIM, data: self.mean.clone() },
        )
    }
}

/// Whether a sample comes from an interleaved bucket or a single solo clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Interleaved,
    Solo,
}

/// One clean training target with everything the losses need.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub kind: SampleKind,
    /// Normalized `T x 526` target.
    pub x0: Tensor,
    pub cond: Conditioning,
    /// True on frames excluded from the reconstruction loss.
    pub masked: Vec<bool>,
    pub windows: Vec<(usize, usize)>,
    /// Frame-0 root of each character, for decoding features to joints.
    pub origins: [RootState; 2],
    /// Ground-truth inter-character distances, `T x 22 x 22`.
    pub target_dm: Vec<f64>,
}

impl TrainingSample {
    pub fn frames(&self) -> usize {
        self.x0.rows
    }
}

/// Joint-space bucket to raw `(x, y)` features.
pub fn bucket_features(bucket: &MotionBucket) -> Result<(MotionSequence, MotionSequence)> {
    Ok((encode(&bucket.u_x)?, encode(&bucket.u_y)?))
}

fn join(x: &[f64], y: &[f64]) -> Tensor {
    let frames = x.len() / FEATURE_DIM;
    let mut data = Vec::with_capacity(2 * x.len());
    for n in 0..frames {
        data.extend_from_slice(&x[n * FEATURE_DIM..(n + 1) * FEATURE_DIM]);
        data.extend_from_slice(&y[n * FEATURE_DIM..(n + 1) * FEATURE_DIM]);
    }
    Tensor { rows: frames, cols: PAIR_DIM, data }
}

fn decoded(raw: &MotionSequence, origin: RootState) -> Result<Tensor> {
    let mut g = Graph::new(&[]);
    let v = g.input(Tensor::new(raw.frames(), FEATURE_DIM, raw.data().to_vec())?);
    let j = g.decode(v, origin)?;
    Ok(g.value(j).clone())
}

impl TrainingSample {
    pub fn from_encoded(b: &EncodedBucket, stats: &FeatureStats) -> Result<Self> {
        let frames = b.frames();
        let (y, target_dm) = match (&b.kind, &b.y) {
            (SampleKind::Interleaved, Some(fy)) => {
                let dm = distance_map(&decoded(&b.x, b.origins[0])?, &decoded(fy, b.origins[1])?)?;
                (stats.normalize(fy.data()), dm)
            }
            (SampleKind::Solo, None) => (vec![0.0; frames * FEATURE_DIM], Vec::new()),
            _ => return Err(Error::InvalidInput("partner stream does not match the sample kind".into())),
        };
        Ok(Self {
            kind: b.kind,
            x0: join(&stats.normalize(b.x.data()), &y),
            cond: Conditioning::from_schedule(b.text.clone(), &b.schedule),
            masked: b.boundary_mask.clone(),
            windows: boundary_windows(&b.schedule.boundaries()),
            origins: b.origins,
            target_dm,
        })
    }

    pub fn from_bucket(bucket: &MotionBucket, stats: &FeatureStats) -> Result<Self> {
        Self::from_encoded(&EncodedBucket::from_bucket(bucket)?, stats)
    }

    /// A solo clip as the first character with an all-zero second stream.
    pub fn from_solo(clip: &SoloClip, stats: &FeatureStats) -> Result<Self> {
        Self::from_encoded(&EncodedBucket::from_solo(clip)?, stats)
    }
}
