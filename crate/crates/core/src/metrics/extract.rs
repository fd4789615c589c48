//! Deterministic stand-in feature extractor for motions and texts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::standard_normal;
use crate::error::{Error, Result};
use crate::interleave::{TextEmbedding, TEXT_DIM};
use crate::motion::{Layout, MotionSequence, FEATURE_DIM};

pub const EMBED_DIM: usize = 128;

pub type FeatureVector = Vec<f64>;

/// Fixed random projections for motion statistics and text vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    seed: u64,
    motion: Vec<f64>,
    text: Vec<f64>,
}

fn projection(seed: u64, stream: u64, inputs: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = 1.0 / (inputs as f64).sqrt();
    standard_normal(&mut rng, EMBED_DIM * inputs).into_iter().map(|v| v * scale).collect()
}

fn project(m: &[f64], x: &[f64]) -> FeatureVector {
    m.chunks(x.len()).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().tanh()).collect()
}

impl Extractor {
    pub fn new(seed: u64) -> Self {
        Self { seed, motion: projection(seed, 1, 2 * FEATURE_DIM), text: projection(seed, 2, TEXT_DIM) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-channel temporal means followed by the variance of frame-to-frame
    /// differences, projected to 128 dims and squashed with `tanh`.
    pub fn statistics(seq: &MotionSequence) -> Result<Vec<f64>> {
        if seq.layout() != Layout::Feature {
            return Err(Error::WrongWidth { expected: FEATURE_DIM, found: seq.width() });
        }
        let t = seq.frames();
        let mut mean = vec![0.0; FEATURE_DIM];
        for f in 0..t {
            mean.iter_mut().zip(seq.frame(f)).for_each(|(m, v)| *m += v / t as f64);
        }
        let mut var = vec![0.0; FEATURE_DIM];
        if t > 1 {
            let n = (t - 1) as f64;
            let mut dmean = vec![0.0; FEATURE_DIM];
            for f in 1..t {
                for (c, d) in dmean.iter_mut().enumerate() {
                    *d += (seq.frame(f)[c] - seq.frame(f - 1)[c]) / n;
                }
            }
            for f in 1..t {
                for (c, v) in var.iter_mut().enumerate() {
                    let d = seq.frame(f)[c] - seq.frame(f - 1)[c] - dmean[c];
                    *v += d * d / n;
                }
            }
        }
        mean.extend(var);
        Ok(mean)
    }

    pub fn extract(&self, seq: &MotionSequence) -> Result<FeatureVector> {
        let out = project(&self.motion, &Self::statistics(seq)?);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("motion features".into()));
        }
        Ok(out)
    }

    pub fn extract_text(&self, text: &TextEmbedding) -> Result<FeatureVector> {
        if text.vector.len() != TEXT_DIM {
            return Err(Error::ShapeMismatch(format!("text vector of {} values", text.vector.len())));
        }
        Ok(project(&self.text, &text.vector))
    }
}

/// One-shot form of [`Extractor::extract`].
pub fn extract(seq: &MotionSequence, extractor_seed: u64) -> Result<FeatureVector> {
    Extractor::new(extractor_seed).extract(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_features(seed: u64, frames: usize) -> MotionSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..frames * FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        MotionSequence::new(20.0, Layout::Feature, data).unwrap()
    }

    #[test]
    fn deterministic_and_bounded() {
        let seq = random_features(1, 30);
        let a = extract(&seq, 5).unwrap();
        assert_eq!(a, extract(&seq, 5).unwrap());
        assert_ne!(a, extract(&seq, 6).unwrap());
        assert_eq!(a.len(), EMBED_DIM);
        assert!(a.iter().all(|v| v.abs() < 1.0));
        let zero = MotionSequence::new(20.0, Layout::Feature, vec![0.0; 10 * FEATURE_DIM]).unwrap();
        let zero2 = MotionSequence::new(20.0, Layout::Feature, vec![0.0; 3 * FEATURE_DIM]).unwrap();
        assert_eq!(extract(&zero, 5).unwrap(), extract(&zero2, 5).unwrap());
    }

    #[test]
    fn frame_permutation_moves_only_difference_channels() {
        let seq = random_features(2, 40);
        let mut order: Vec<usize> = (0..40).collect();
        order.reverse();
        order.swap(3, 17);
        let data: Vec<f64> = order.iter().flat_map(|&f| seq.frame(f).to_vec()).collect();
        let perm = MotionSequence::new(20.0, Layout::Feature, data).unwrap();
        let (a, b) = (Extractor::statistics(&seq).unwrap(), Extractor::statistics(&perm).unwrap());
        for c in 0..FEATURE_DIM {
            assert!((a[c] - b[c]).abs() < 1e-12);
        }
        assert!((FEATURE_DIM..2 * FEATURE_DIM).any(|c| (a[c] - b[c]).abs() > 1e-3));
    }
}
