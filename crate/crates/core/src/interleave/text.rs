use serde::{Deserialize, Serialize};

/// Width of a text embedding vector.
pub const TEXT_DIM: usize = 512;

/// A text description together with its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    pub source_text: String,
}

impl TextEmbedding {
    pub fn new(source_text: impl Into<String>, vector: Vec<f64>) -> Self {
        Self { vector, source_text: source_text.into() }
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Joins descriptions in playback order: texts with " then ", vectors by
/// normalized mean. A zero mean stays zero.
pub fn combine_texts(parts: &[&TextEmbedding]) -> TextEmbedding {
    let dim = parts.iter().map(|p| p.vector.len()).max().unwrap_or(0);
    let mut mean = vec![0.0; dim];
    for p in parts {
        for (m, v) in mean.iter_mut().zip(&p.vector) {
            *m += v / parts.len() as f64;
        }
    }
    let n = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 1e-12 {
        mean.iter_mut().for_each(|v| *v /= n);
    }
    let text = parts.iter().map(|p| p.source_text.as_str()).collect::<Vec<_>>().join(" then ");
    TextEmbedding::new(text, mean)
}

/// Two-part form of [`combine_texts`]; `first` plays first.
pub fn combine_text(first: &TextEmbedding, second: &TextEmbedding) -> TextEmbedding {
    combine_texts(&[first, second])
}
