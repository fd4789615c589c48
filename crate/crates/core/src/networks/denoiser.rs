//! Conditional transformer denoiser over paired feature streams.

use serde::{Deserialize, Serialize};

use super::attention::multi_head;
use super::embed::{positional_table, sinusoidal, time_embedding, TIME_EMBED_DIM};
use super::layout::{Linear, Norm, ParamBuilder};
use crate::diffusion::Denoiser;
use crate::error::{Error, Result};
use crate::interleave::{SegmentSchedule, TextEmbedding, TEXT_DIM};
use crate::motion::FEATURE_DIM;
use crate::nn::{Graph, Tensor, Var};

/// Channels per frame of a paired stream: both characters side by side.
pub const PAIR_DIM: usize = 2 * FEATURE_DIM;

/// Number of conditioning tokens prepended to the frame tokens.
pub const COND_TOKENS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserArch {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
}

impl Default for DenoiserArch {
    fn default() -> Self {
        Self { layers: 4, width: 128, heads: 4 }
    }
}

impl DenoiserArch {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::InvalidInput(format!(
                "denoiser needs positive layers/width/heads with width divisible by heads, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (w, l) = (self.width, self.layers);
        let io = PAIR_DIM * w + w + w * PAIR_DIM + PAIR_DIM;
        let cond = TEXT_DIM * w + w + 3 * (TIME_EMBED_DIM * w + w);
        io + cond + l * (8 * w * w + 11 * w) + 2 * w
    }
}

/// Text plus segment timing for one bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub text: TextEmbedding,
    pub t_i: Option<usize>,
    pub t_s: Option<usize>,
}

impl Conditioning {
    pub fn new(text: TextEmbedding, t_i: Option<usize>, t_s: Option<usize>) -> Self {
        Self { text, t_i, t_s }
    }

    pub fn from_schedule(text: TextEmbedding, schedule: &SegmentSchedule) -> Self {
        Self { text, t_i: schedule.t_i(), t_s: schedule.t_s() }
    }

    pub fn t_embed_i(&self) -> Vec<f64> {
        time_embedding(self.t_i)
    }

    pub fn t_embed_s(&self) -> Vec<f64> {
        time_embedding(self.t_s)
    }
}

pub fn step_embedding(t: usize) -> Vec<f64> {
    sinusoidal(t as f64, TIME_EMBED_DIM)
}

#[derive(Debug, Clone, Copy)]
struct BlockParams {
    ln1: Norm,
    qkv: Linear,
    out: Linear,
    ln2: Norm,
    up: Linear,
    down: Linear,
}

#[derive(Debug)]
struct DenoiserLayout {
    input: Linear,
    text: Linear,
    t_i: Linear,
    t_s: Linear,
    step: Linear,
    blocks: Vec<BlockParams>,
    final_norm: Norm,
    head: Linear,
    builder: ParamBuilder,
}

impl DenoiserLayout {
    fn new(arch: &DenoiserArch) -> Self {
        let w = arch.width;
        let mut b = ParamBuilder::default();
        let input = b.linear(PAIR_DIM, w);
        let text = b.linear(TEXT_DIM, w);
        let t_i = b.linear(TIME_EMBED_DIM, w);
        let t_s = b.linear(TIME_EMBED_DIM, w);
        let step = b.linear(TIME_EMBED_DIM, w);
        let blocks = (0..arch.layers)
            .map(|_| BlockParams {
                ln1: b.norm(w),
                qkv: b.linear(w, 3 * w),
                out: b.linear(w, w),
                ln2: b.norm(w),
                up: b.linear(w, 2 * w),
                down: b.linear(2 * w, w),
            })
            .collect();
        let final_norm = b.norm(w);
        let head = b.zero_linear(w, PAIR_DIM);
        Self { input, text, t_i, t_s, step, blocks, final_norm, head, builder: b }
    }
}

/// Flat parameters of the denoiser with their architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub arch: DenoiserArch,
    pub values: Vec<f64>,
}

impl DenoiserParams {
    /// Seeded initialization; the output head starts at zero.
    pub fn init(arch: DenoiserArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let values = DenoiserLayout::new(&arch).builder.initialize(seed);
        Ok(Self { arch, values })
    }

    pub fn from_values(arch: DenoiserArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a denoiser needing {}",
                values.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, values })
    }
}

fn row(g: &mut Graph, v: Vec<f64>) -> Var {
    let n = v.len();
    g.input(Tensor { rows: 1, cols: n, data: v })
}

/// Builds the denoiser on `g`, whose parameter vector must be laid out for
/// `arch`. `x` is `T x 526`; the result has the same shape.
pub fn denoiser_forward(g: &mut Graph, arch: &DenoiserArch, x: Var, cond: &Conditioning, t: usize) -> Result<Var> {
    let lay = DenoiserLayout::new(arch);
    let frames = g.value(x).rows;
    if g.value(x).cols != PAIR_DIM {
        return Err(Error::WrongWidth { expected: PAIR_DIM, found: g.value(x).cols });
    }
    if cond.text.vector.len() != TEXT_DIM {
        return Err(Error::ShapeMismatch(format!("text embedding of {} values", cond.text.vector.len())));
    }
    let text_in = row(g, cond.text.vector.clone());
    let ti_in = row(g, cond.t_embed_i());
    let ts_in = row(g, cond.t_embed_s());
    let step_in = row(g, step_embedding(t));
    let tokens = [
        lay.text.apply(g, text_in)?,
        lay.t_i.apply(g, ti_in)?,
        lay.t_s.apply(g, ts_in)?,
        lay.step.apply(g, step_in)?,
    ];
    let frames_h = lay.input.apply(g, x)?;
    let pos = g.input(positional_table(frames, arch.width));
    let frames_h = g.add(frames_h, pos)?;
    let mut parts = tokens.to_vec();
    parts.push(frames_h);
    let mut h = g.concat_rows(&parts)?;
    let w = arch.width;
    for blk in &lay.blocks {
        let a = blk.ln1.apply(g, h)?;
        let qkv = blk.qkv.apply(g, a)?;
        let q = g.slice_cols(qkv, 0, w)?;
        let k = g.slice_cols(qkv, w, 2 * w)?;
        let v = g.slice_cols(qkv, 2 * w, 3 * w)?;
        let att = multi_head(g, q, k, v, arch.heads)?;
        let att = blk.out.apply(g, att)?;
        h = g.add(h, att)?;
        let m = blk.ln2.apply(g, h)?;
        let m = blk.up.apply(g, m)?;
        let m = g.gelu(m);
        let m = blk.down.apply(g, m)?;
        h = g.add(h, m)?;
    }
    let h = g.slice_rows(h, COND_TOKENS, COND_TOKENS + frames)?;
    let h = lay.final_norm.apply(g, h)?;
    lay.head.apply(g, h)
}

/// Forward evaluation on a `T x 526` row-major buffer.
pub fn denoise(params: &DenoiserParams, x_t: &[f64], cond: &Conditioning, t: usize) -> Result<Vec<f64>> {
    if x_t.len() % PAIR_DIM != 0 {
        return Err(Error::WrongWidth { expected: PAIR_DIM, found: x_t.len() % PAIR_DIM });
    }
    let mut g = Graph::new(&params.values);
    let x = g.input(Tensor::new(x_t.len() / PAIR_DIM, PAIR_DIM, x_t.to_vec())?);
    let out = denoiser_forward(&mut g, &params.arch, x, cond, t)?;
    let v = g.value(out);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("denoiser output at step {t}")));
    }
    Ok(v.data.clone())
}

impl Denoiser for DenoiserParams {
    type Cond = Conditioning;

    fn denoise(&self, x_t: &[f64], cond: &Conditioning, t: usize) -> Result<Vec<f64>> {
        denoise(self, x_t, cond, t)
    }
}
