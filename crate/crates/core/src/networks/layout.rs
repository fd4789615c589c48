use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::{Graph, Var};

/// A `rows x cols` window into a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn var(&self, g: &mut Graph) -> Var {
        g.param(self.offset, self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Fan,
    Zeros,
    Ones,
}

/// Sequential allocator of parameter blocks with their initializers.
#[derive(Debug, Default)]
pub struct ParamBuilder {
    blocks: Vec<(Block, Init)>,
    total: usize,
}

impl ParamBuilder {
    fn push(&mut self, rows: usize, cols: usize, init: Init) -> Block {
        let b = Block { offset: self.total, rows, cols };
        self.total += rows * cols;
        self.blocks.push((b, init));
        b
    }

    /// Weight matrix drawn from `N(0, 1 / rows)`.
    pub fn weight(&mut self, rows: usize, cols: usize) -> Block {
        self.push(rows, cols, Init::Fan)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Block {
        self.push(rows, cols, Init::Zeros)
    }

    pub fn ones(&mut self, rows: usize, cols: usize) -> Block {
        self.push(rows, cols, Init::Ones)
    }

    pub fn linear(&mut self, fan_in: usize, fan_out: usize) -> Linear {
        Linear { w: self.weight(fan_in, fan_out), b: self.zeros(1, fan_out) }
    }

    pub fn zero_linear(&mut self, fan_in: usize, fan_out: usize) -> Linear {
        Linear { w: self.zeros(fan_in, fan_out), b: self.zeros(1, fan_out) }
    }

    pub fn norm(&mut self, width: usize) -> Norm {
        Norm { gamma: self.ones(1, width), beta: self.zeros(1, width) }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn initialize(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![0.0; self.total];
        for (b, init) in &self.blocks {
            let dst = &mut out[b.offset..b.offset + b.len()];
            match init {
                Init::Zeros => {}
                Init::Ones => dst.fill(1.0),
                Init::Fan => {
                    let n = Normal::new(0.0, 1.0 / (b.rows as f64).sqrt()).expect("positive std");
                    dst.iter_mut().for_each(|v| *v = n.sample(&mut rng));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: Block,
    pub b: Block,
}

impl Linear {
    pub fn apply(&self, g: &mut Graph, x: Var) -> crate::Result<Var> {
        let (w, b) = (self.w.var(g), self.b.var(g));
        let h = g.matmul(x, w)?;
        g.add_row(h, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: Block,
    pub beta: Block,
}

impl Norm {
    pub fn apply(&self, g: &mut Graph, x: Var) -> crate::Result<Var> {
        let (a, b) = (self.gamma.var(g), self.beta.var(g));
        g.layer_norm(x, a, b)
    }
}
