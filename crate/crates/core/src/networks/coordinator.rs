//! Coordinator network refining one character against another.

use serde::{Deserialize, Serialize};

use super::attention::multi_head;
use super::embed::positional_table;
use super::layout::{Linear, Norm, ParamBuilder};
use crate::error::{Error, Result};
use crate::interleave::{TextEmbedding, TEXT_DIM};
use crate::motion::FEATURE_DIM;
use crate::nn::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinatorArch {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
}

impl Default for CoordinatorArch {
    fn default() -> Self {
        Self { layers: 2, width: 128, heads: 4 }
    }
}

impl CoordinatorArch {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::InvalidInput(format!(
                "coordinator needs positive layers/width/heads with width divisible by heads, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let w = self.width;
        let f = FEATURE_DIM;
        let memory = f * w + w + TEXT_DIM * w + w;
        let layer = (f * w + w) + 2 * w + (2 * w * w + 2 * w) + (2 * w * w + w) + 4 * w + 3 * (w * w + w) + (w * f + f);
        memory + self.layers * layer
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerParams {
    input: Linear,
    ln_mlp: Norm,
    up: Linear,
    down: Linear,
    ln_q: Norm,
    ln_m: Norm,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

struct CoordinatorLayout {
    reference: Linear,
    text: Linear,
    layers: Vec<LayerParams>,
    builder: ParamBuilder,
}

impl CoordinatorLayout {
    fn new(arch: &CoordinatorArch) -> Self {
        let w = arch.width;
        let mut b = ParamBuilder::default();
        let reference = b.linear(FEATURE_DIM, w);
        let text = b.linear(TEXT_DIM, w);
        let layers = (0..arch.layers)
            .map(|_| LayerParams {
                input: b.linear(FEATURE_DIM, w),
                ln_mlp: b.norm(w),
                up: b.linear(w, 2 * w),
                down: b.linear(2 * w, w),
                ln_q: b.norm(w),
                ln_m: b.norm(w),
                q: b.linear(w, w),
                k: b.linear(w, w),
                v: b.linear(w, w),
                out: b.zero_linear(w, FEATURE_DIM),
            })
            .collect();
        Self { reference, text, layers, builder: b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorParams {
    pub arch: CoordinatorArch,
    pub values: Vec<f64>,
}

impl CoordinatorParams {
    /// Seeded initialization; output projections start at zero so the
    /// coordinator is the identity on its primary stream.
    pub fn init(arch: CoordinatorArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let values = CoordinatorLayout::new(&arch).builder.initialize(seed);
        Ok(Self { arch, values })
    }

    pub fn from_values(arch: CoordinatorArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a coordinator needing {}",
                values.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, values })
    }
}

/// Builds the coordinator on `g`. `primary` and `reference` are `T x 263`.
pub fn coordinator_forward(
    g: &mut Graph,
    arch: &CoordinatorArch,
    primary: Var,
    reference: Var,
    text: &TextEmbedding,
) -> Result<Var> {
    let (p, r) = (g.value(primary), g.value(reference));
    if p.cols != FEATURE_DIM || p.shape() != r.shape() {
        return Err(Error::ShapeMismatch(format!("primary {:?}, reference {:?}", p.shape(), r.shape())));
    }
    if text.vector.len() != TEXT_DIM {
        return Err(Error::ShapeMismatch(format!("text embedding of {} values", text.vector.len())));
    }
    let frames = p.rows;
    let lay = CoordinatorLayout::new(arch);
    let pos = g.input(positional_table(frames, arch.width));
    let text_in = g.input(Tensor { rows: 1, cols: TEXT_DIM, data: text.vector.clone() });
    let text_tok = lay.text.apply(g, text_in)?;
    let ref_tok = lay.reference.apply(g, reference)?;
    let ref_tok = g.add(ref_tok, pos)?;
    let memory = g.concat_rows(&[text_tok, ref_tok])?;
    let mut z = primary;
    for l in &lay.layers {
        let a = l.input.apply(g, z)?;
        let a = g.add(a, pos)?;
        let m = l.ln_mlp.apply(g, a)?;
        let m = l.up.apply(g, m)?;
        let m = g.gelu(m);
        let m = l.down.apply(g, m)?;
        let h = g.add(a, m)?;
        let hq = l.ln_q.apply(g, h)?;
        let mem = l.ln_m.apply(g, memory)?;
        let q = l.q.apply(g, hq)?;
        let k = l.k.apply(g, mem)?;
        let v = l.v.apply(g, mem)?;
        let ca = multi_head(g, q, k, v, arch.heads)?;
        let mixed = g.add(h, ca)?;
        let delta = l.out.apply(g, mixed)?;
        z = g.add(z, delta)?;
    }
    Ok(z)
}

/// Forward evaluation on row-major `T x 263` buffers.
pub fn coordinate(params: &CoordinatorParams, primary: &[f64], reference: &[f64], text: &TextEmbedding) -> Result<Vec<f64>> {
    if primary.len() != reference.len() || primary.len() % FEATURE_DIM != 0 {
        return Err(Error::ShapeMismatch(format!(
            "primary of {} values, reference of {}",
            primary.len(),
            reference.len()
        )));
    }
    let frames = primary.len() / FEATURE_DIM;
    let mut g = Graph::new(&params.values);
    let p = g.input(Tensor::new(frames, FEATURE_DIM, primary.to_vec())?);
    let r = g.input(Tensor::new(frames, FEATURE_DIM, reference.to_vec())?);
    let out = coordinator_forward(&mut g, &params.arch, p, r, text)?;
    let v = g.value(out);
    if !v.is_finite() {
        return Err(Error::NonFinite("coordinator output".into()));
    }
    Ok(v.data.clone())
}

/// Splits a `T x 526` paired stream into its two `T x 263` halves.
pub fn split_pair(pair: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = 2 * FEATURE_DIM;
    if pair.len() % w != 0 {
        return Err(Error::WrongWidth { expected: w, found: pair.len() % w });
    }
    let mut x = Vec::with_capacity(pair.len() / 2);
    let mut y = Vec::with_capacity(pair.len() / 2);
    for row in pair.chunks(w) {
        x.extend_from_slice(&row[..FEATURE_DIM]);
        y.extend_from_slice(&row[FEATURE_DIM..]);
    }
    Ok((x, y))
}

/// Inverse of [`split_pair`].
pub fn join_pair(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() % FEATURE_DIM != 0 {
        return Err(Error::ShapeMismatch(format!("halves of {} and {} values", x.len(), y.len())));
    }
    let mut out = Vec::with_capacity(2 * x.len());
    for (a, b) in x.chunks(FEATURE_DIM).zip(y.chunks(FEATURE_DIM)) {
        out.extend_from_slice(a);
        out.extend_from_slice(b);
    }
    Ok(out)
}

/// `phi_x = M_c(u_x, u_y)`, then `phi_y = M_c(u_y, phi_x)`.
pub fn refine_pair(ms_out: &[f64], params: &CoordinatorParams, text: &TextEmbedding) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ux, uy) = split_pair(ms_out)?;
    let phi_x = coordinate(params, &ux, &uy, text)?;
    let phi_y = coordinate(params, &uy, &phi_x, text)?;
    Ok((phi_x, phi_y))
}

/// Round-robin refinement of several characters, each against the mean of
/// the others' current streams.
pub fn refine_multi(
    sequences: &[Vec<f64>],
    params: &CoordinatorParams,
    text: &TextEmbedding,
    iterations: usize,
) -> Result<Vec<Vec<f64>>> {
    if sequences.len() < 2 {
        return Err(Error::InvalidInput(format!("refinement needs at least 2 sequences, got {}", sequences.len())));
    }
    if iterations == 0 {
        return Err(Error::InvalidInput("refinement needs at least one iteration".into()));
    }
    let len = sequences[0].len();
    if sequences.iter().any(|s| s.len() != len) {
        return Err(Error::ShapeMismatch("sequences differ in length".into()));
    }
    let mut cur = sequences.to_vec();
    let n = cur.len();
    for _ in 0..iterations {
        for i in 0..n {
            let mut reference = vec![0.0; len];
            for (j, s) in cur.iter().enumerate() {
                if j != i {
                    reference.iter_mut().zip(s).for_each(|(r, v)| *r += v / (n - 1) as f64);
                }
            }
            cur[i] = coordinate(params, &cur[i], &reference, text)?;
        }
    }
    Ok(cur)
}
