//! Evaluation metrics over a fixed random-projection feature space.

mod extract;
mod fid;
mod hybrid;
mod retrieval;

pub use extract::{extract, Extractor, FeatureVector, EMBED_DIM};
pub use fid::{fid, frechet_distance, GaussianStats, FID_MIN_SAMPLES};
pub use hybrid::hybrid_score;
pub use retrieval::{
    diversity, mm_dist, mmodality, r_precision, r_precision_ranks, MMODALITY_MIN_SAMPLES, R_PRECISION_POOL,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fid: f64,
    pub r_precision: TopK,
    pub mm_dist: f64,
    pub diversity: f64,
    pub mmodality: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid_score: Option<f64>,
    pub n_samples: usize,
    pub extractor_seed: u64,
}

/// Inputs of a full report, all in the extractor's feature space.
pub struct ReportInputs<'a> {
    pub real: &'a [FeatureVector],
    pub generated: &'a [FeatureVector],
    /// Text feature paired with each generated motion.
    pub texts: &'a [FeatureVector],
    /// Repeated generations per prompt.
    pub per_text: &'a [Vec<FeatureVector>],
    pub hybrid_score: Option<f64>,
}

pub const DIVERSITY_PAIRS: usize = 300;
pub const MMODALITY_PAIRS: usize = 10;

pub fn report(inputs: &ReportInputs<'_>, extractor_seed: u64, seed: u64) -> Result<MetricsReport> {
    let rp = |k| r_precision(inputs.generated, inputs.texts, k, seed);
    Ok(MetricsReport {
        fid: fid(inputs.real, inputs.generated)?,
        r_precision: TopK { top1: rp(1)?, top2: rp(2)?, top3: rp(3)? },
        mm_dist: mm_dist(inputs.generated, inputs.texts)?,
        diversity: diversity(inputs.generated, DIVERSITY_PAIRS, seed)?,
        mmodality: mmodality(inputs.per_text, MMODALITY_PAIRS, seed)?,
        hybrid_score: inputs.hybrid_score,
        n_samples: inputs.generated.len(),
        extractor_seed,
    })
}
