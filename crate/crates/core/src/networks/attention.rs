use crate::error::Result;
use crate::nn::{Graph, Var};

/// Multi-head scaled dot-product attention over already-projected
/// `q` (`n x w`), `k` and `v` (`m x w`). Returns `n x w` with heads
/// concatenated along columns.
pub fn multi_head(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let w = g.value(q).cols;
    let d = w / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * d, (h + 1) * d)?;
        let kh = g.slice_cols(k, h * d, (h + 1) * d)?;
        let vh = g.slice_cols(v, h * d, (h + 1) * d)?;
        let scores = g.matmul_t(qh, kh)?;
        let scores = g.scale(scores, scale);
        let attn = g.softmax_rows(scores);
        outs.push(g.matmul(attn, vh)?);
    }
    if outs.len() == 1 {
        return Ok(outs[0]);
    }
    g.concat_cols(&outs)
}
