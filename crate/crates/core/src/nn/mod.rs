//! Minimal reverse-mode autodiff used by the denoiser and coordinator.

pub mod graph;
pub mod tensor;

pub use graph::{Graph, Var};
pub use tensor::{matmul, Tensor};

use crate::error::{Error, Result};

/// Evaluates `loss_fn` on a fresh graph over `params` and returns the loss
/// with its exact parameter gradient.
pub fn grad<F>(params: &[f64], loss_fn: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = loss_fn(&mut g)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut out = vec![0.0; params.len()];
    g.backward(loss, &mut out)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((value, out))
}

/// Loss only, without building gradients.
pub fn eval<F>(params: &[f64], loss_fn: F) -> Result<f64>
where
    F: FnOnce(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = loss_fn(&mut g)?;
    Ok(g.scalar(loss))
}

/// Central-difference derivative of `f` along parameter `i`.
pub fn finite_difference<F>(params: &[f64], i: usize, h: f64, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut p = params.to_vec();
    p[i] = params[i] + h;
    let up = f(&p)?;
    p[i] = params[i] - h;
    let down = f(&p)?;
    Ok((up - down) / (2.0 * h))
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
