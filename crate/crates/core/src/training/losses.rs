//! Loss terms, each evaluated on the same differentiable primitives used in
//! training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interleave::BOUNDARY_RADIUS;
use crate::motion::RootState;
use crate::nn::{Graph, Tensor};

/// Default distance-map mask threshold in meters.
pub const DM_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 0.1, lambda3: 1.0, lambda4: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!("loss weights must be finite and non-negative, got {self:?}")));
        }
        Ok(())
    }
}

/// `[b - 5, b + 5]` windows around each boundary, clipped at frame 0.
pub fn boundary_windows(boundaries: &[usize]) -> Vec<(usize, usize)> {
    boundaries.iter().map(|b| (b.saturating_sub(BOUNDARY_RADIUS), b + BOUNDARY_RADIUS)).collect()
}

/// Mean squared error over frames whose `masked` flag is false.
pub fn loss_rec(pred: &Tensor, target: &Tensor, masked: &[bool]) -> Result<f64> {
    let keep: Vec<bool> = masked.iter().map(|m| !m).collect();
    let mut g = Graph::new(&[]);
    let (p, t) = (g.input(pred.clone()), g.input(target.clone()));
    let l = g.masked_mse(p, t, &keep)?;
    Ok(g.scalar(l))
}

/// Windowed L1 norm of forward frame differences, per channel count.
pub fn loss_smooth(u: &Tensor, boundaries: &[usize]) -> f64 {
    let mut g = Graph::new(&[]);
    let x = g.input(u.clone());
    let l = g.window_l1(x, &boundary_windows(boundaries));
    g.scalar(l)
}

/// Root-mean-square difference.
pub fn loss_rela(phi_y: &Tensor, u_y_hat: &Tensor) -> Result<f64> {
    let mut g = Graph::new(&[]);
    let (a, b) = (g.input(phi_y.clone()), g.input(u_y_hat.clone()));
    let d = g.sub(a, b)?;
    let l = g.rms(d);
    Ok(g.scalar(l))
}

/// Per-frame `K x K` distances between the joints of two `T x 3K` tensors.
pub fn distance_map(x: &Tensor, y: &Tensor) -> Result<Vec<f64>> {
    if x.shape() != y.shape() || x.cols % 3 != 0 {
        return Err(Error::ShapeMismatch(format!("distance map of {:?} and {:?}", x.shape(), y.shape())));
    }
    let k = x.cols / 3;
    let mut out = Vec::with_capacity(x.rows * k * k);
    for n in 0..x.rows {
        let (a, b) = (x.row(n), y.row(n));
        for i in 0..k {
            for j in 0..k {
                let d: f64 = (0..3).map(|c| (a[3 * i + c] - b[3 * j + c]).powi(2)).sum();
                out.push(d.sqrt());
            }
        }
    }
    Ok(out)
}

/// Masked distance-map L1 in joint space (`T x 3K` per character).
pub fn loss_dm_joints(x: &Tensor, y: &Tensor, target: (&Tensor, &Tensor), threshold: f64) -> Result<f64> {
    let dm = distance_map(target.0, target.1)?;
    let mut g = Graph::new(&[]);
    let (a, b) = (g.input(x.clone()), g.input(y.clone()));
    let l = g.distance_l1(a, b, &dm, threshold)?;
    Ok(g.scalar(l))
}

/// Masked distance-map L1 on raw `T x 263` features, decoded from the given
/// per-character origins.
pub fn loss_dm(
    phi_x: &Tensor,
    u_y_hat: &Tensor,
    target: (&Tensor, &Tensor),
    origins: [RootState; 2],
    threshold: f64,
) -> Result<f64> {
    let mut g = Graph::new(&[]);
    let mut joints = |t: &Tensor, o: RootState| -> Result<Tensor> {
        let v = g.input(t.clone());
        let j = g.decode(v, o)?;
        Ok(g.value(j).clone())
    };
    let (x, y) = (joints(phi_x, origins[0])?, joints(u_y_hat, origins[1])?);
    let (tx, ty) = (joints(target.0, origins[0])?, joints(target.1, origins[1])?);
    loss_dm_joints(&x, &y, (&tx, &ty), threshold)
}
