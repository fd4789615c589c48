//! Text-motion matching and spread statistics over feature vectors.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Candidates per R-Precision query: the true text and 31 decoys.
pub const R_PRECISION_POOL: usize = 32;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn paired(motion: &[Vec<f64>], text: &[Vec<f64>]) -> Result<()> {
    if motion.len() != text.len() {
        return Err(Error::ShapeMismatch(format!("{} motions but {} texts", motion.len(), text.len())));
    }
    if motion.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(())
}

/// Fraction of motions whose own text is among the `k` nearest of a pool
/// holding it and 31 seeded decoys. Ties rank in the true text's favour.
pub fn r_precision(motion: &[Vec<f64>], text: &[Vec<f64>], k: usize, seed: u64) -> Result<f64> {
    paired(motion, text)?;
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidInput(format!("top-{k} R-Precision; k must be 1, 2 or 3")));
    }
    Ok(r_precision_ranks(motion, text, seed)?.iter().filter(|&&r| r < k).count() as f64 / motion.len() as f64)
}

/// Rank of the true text for each query (0 is best).
pub fn r_precision_ranks(motion: &[Vec<f64>], text: &[Vec<f64>], seed: u64) -> Result<Vec<usize>> {
    paired(motion, text)?;
    let n = motion.len();
    if n < R_PRECISION_POOL {
        return Err(Error::TooFewSamples { needed: R_PRECISION_POOL, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let own = dist(&motion[i], &text[i]);
            index::sample(&mut rng, n - 1, R_PRECISION_POOL - 1)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .filter(|&j| dist(&motion[i], &text[j]) < own)
                .count()
        })
        .collect())
}

/// Mean distance between paired motion and text features.
pub fn mm_dist(motion: &[Vec<f64>], text: &[Vec<f64>]) -> Result<f64> {
    paired(motion, text)?;
    Ok(motion.iter().zip(text).map(|(m, t)| dist(m, t)).sum::<f64>() / motion.len() as f64)
}

/// Mean distance over up to `pairs` seeded disjoint pairs.
pub fn diversity(feats: &[Vec<f64>], pairs: usize, seed: u64) -> Result<f64> {
    let n = feats.len();
    if n < 2 || pairs == 0 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let m = pairs.min(n / 2);
    Ok((0..m).map(|p| dist(&feats[order[2 * p]], &feats[order[2 * p + 1]])).sum::<f64>() / m as f64)
}

/// Fewest samples per text accepted by [`mmodality`].
pub const MMODALITY_MIN_SAMPLES: usize = 10;

/// Per text, the mean distance between `pairs` seeded draws of two samples
/// (drawn independently, with replacement); averaged over texts.
pub fn mmodality(groups: &[Vec<Vec<f64>>], pairs: usize, seed: u64) -> Result<f64> {
    if groups.is_empty() || pairs == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for g in groups {
        if g.len() < MMODALITY_MIN_SAMPLES {
            return Err(Error::TooFewSamples { needed: MMODALITY_MIN_SAMPLES, got: g.len() });
        }
        let sum: f64 = (0..pairs).map(|_| dist(&g[rng.gen_range(0..g.len())], &g[rng.gen_range(0..g.len())])).sum();
        total += sum / pairs as f64;
    }
    Ok(total / groups.len() as f64)
}
