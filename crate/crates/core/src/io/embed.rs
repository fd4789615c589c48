use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::diffusion::standard_normal;
use crate::interleave::{TextEmbedding, TEXT_DIM};

/// Lowercased whitespace tokens with surrounding punctuation removed.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn token_vector(token: &str) -> Vec<f64> {
    let digest = Sha256::digest(token.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"));
    standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), TEXT_DIM)
}

/// Deterministic 512-dim bag-of-words embedding: each token maps to a
/// Gaussian vector seeded by its hash; the sum is normalized.
pub fn pseudo_embed(text: &str) -> TextEmbedding {
    let mut v = vec![0.0; TEXT_DIM];
    let mut toks = tokens(text);
    // Sorted so the floating-point sum does not depend on word order.
    toks.sort();
    for t in toks {
        v.iter_mut().zip(token_vector(&t)).for_each(|(a, b)| *a += b);
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    TextEmbedding::new(text.split_whitespace().collect::<Vec<_>>().join(" "), v)
}
