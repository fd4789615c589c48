use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Fewest samples per set accepted by [`fid`].
pub const FID_MIN_SAMPLES: usize = 130;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianStats {
    /// Sample mean and unbiased covariance.
    pub fn fit(feats: &[Vec<f64>]) -> Result<Self> {
        let n = feats.len();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let d = feats[0].len();
        if feats.iter().any(|f| f.len() != d) {
            return Err(Error::ShapeMismatch("feature vectors differ in length".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| feats[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let mut covariance = centered.transpose() * &centered / (n - 1) as f64;
        covariance = (&covariance + covariance.transpose()) * 0.5;
        Ok(Self { mean, covariance })
    }
}

fn clipped_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    e.eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0));
    e
}

fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = clipped_eigen(m);
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    &e.eigenvectors * s * e.eigenvectors.transpose()
}

/// Frechet distance between two Gaussians.
///
/// The cross term uses `tr((A B)^1/2) = tr((A^1/2 B A^1/2)^1/2)`, both roots
/// from symmetric eigendecompositions with negative eigenvalues clipped to 0.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> f64 {
    let diff = &a.mean - &b.mean;
    let ra = sqrtm(&a.covariance);
    let inner = &ra * &b.covariance * &ra;
    let cross: f64 = clipped_eigen(&inner).eigenvalues.iter().map(|v| v.sqrt()).sum();
    diff.norm_squared() + a.covariance.trace() + b.covariance.trace() - 2.0 * cross
}

pub fn fid(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    for set in [a, b] {
        if set.len() < FID_MIN_SAMPLES {
            return Err(Error::TooFewSamples { needed: FID_MIN_SAMPLES, got: set.len() });
        }
    }
    let (sa, sb) = (GaussianStats::fit(a)?, GaussianStats::fit(b)?);
    if sa.mean.len() != sb.mean.len() {
        return Err(Error::ShapeMismatch("feature sets differ in width".into()));
    }
    // Averaged over both argument orders so the result is symmetric to rounding.
    Ok(0.5 * (frechet_distance(&sa, &sb) + frechet_distance(&sb, &sa)))
}
