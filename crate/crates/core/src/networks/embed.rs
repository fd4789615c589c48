use crate::nn::Tensor;

/// Width of the timing and step embeddings.
pub const TIME_EMBED_DIM: usize = 64;

/// Interleaved sine/cosine embedding of a scalar position.
pub fn sinusoidal(value: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = 10_000f64.powf(-((2 * k) as f64) / dim as f64);
        out[2 * k] = (value * freq).sin();
        out[2 * k + 1] = (value * freq).cos();
    }
    out
}

/// Timing embedding; an absent segment maps to the zero vector.
pub fn time_embedding(t: Option<usize>) -> Vec<f64> {
    t.map_or_else(|| vec![0.0; TIME_EMBED_DIM], |v| sinusoidal(v as f64, TIME_EMBED_DIM))
}

/// `rows x width` table of per-position sinusoidal encodings.
pub fn positional_table(rows: usize, width: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        data.extend(sinusoidal(r as f64, width));
    }
    Tensor { rows, cols: width, data }
}
