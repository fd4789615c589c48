//! Reverse-mode differentiation over a closed set of 2-D primitives.

use crate::error::{Error, Result};
use crate::features::{LOCAL_POS, ROOT_ANG_VEL, ROOT_HEIGHT, ROOT_LIN_VEL};
use crate::geometry::vec3;
use crate::motion::{RootState, FEATURE_DIM};
use crate::skeleton::CANONICAL_JOINTS;

use super::tensor::{gemm, Tensor, View};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param { offset: usize },
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gelu(Var),
    Softmax(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MaskedMse { pred: Var, target: Var, rows: Vec<usize>, count: f64 },
    WindowL1 { u: Var, pairs: Vec<usize>, channels: f64 },
    Rms(Var),
    Decode { f: Var, headings: Vec<f64> },
    DistanceL1 { x: Var, y: Var, target: Vec<f64>, threshold: f64, count: usize },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A tape of operations; parameters are windows into one flat vector.
pub struct Graph<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn rot90(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A `rows x cols` block of the parameter vector starting at `offset`.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Var {
        let data = self.params[offset..offset + rows * cols].to_vec();
        self.push(Tensor { rows, cols, data }, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols != y.rows {
            return Err(Error::ShapeMismatch(format!("matmul {:?} x {:?}", x.shape(), y.shape())));
        }
        let mut c = Tensor::zeros(x.rows, y.cols);
        gemm(View::of(x), View::of(y), &mut c, 0.0);
        Ok(self.push(c, Op::MatMul(a, b)))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols != y.cols {
            return Err(Error::ShapeMismatch(format!("matmul_t {:?} x {:?}^T", x.shape(), y.shape())));
        }
        let mut c = Tensor::zeros(x.rows, y.rows);
        gemm(View::of(x), View::t(y), &mut c, 0.0);
        Ok(self.push(c, Op::MatMulT(a, b)))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, what)?;
        let data = x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect();
        let t = Tensor { rows: x.rows, cols: x.cols, data };
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    fn row_op(&mut self, a: Var, r: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (x, row) = (self.value(a), self.value(r));
        if row.rows != 1 || row.cols != x.cols {
            return Err(Error::ShapeMismatch(format!("{what}: {:?} with row {:?}", x.shape(), row.shape())));
        }
        let mut t = x.clone();
        for i in 0..t.rows {
            t.row_mut(i).iter_mut().zip(&row.data).for_each(|(v, b)| *v = f(*v, *b));
        }
        Ok(self.push(t, op))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_op(a, row, "add_row", |v, b| v + b, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_op(a, row, "mul_row", |v, b| v * b, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut t = self.value(a).clone();
        t.data.iter_mut().for_each(|v| *v *= s);
        self.push(t, Op::Scale(a, s))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, g, b) = (self.value(x), self.value(gamma), self.value(beta));
        let c = xv.cols;
        if g.shape() != (1, c) || b.shape() != (1, c) {
            return Err(Error::ShapeMismatch(format!("layer_norm over {c} columns")));
        }
        let mut out = Tensor::zeros(xv.rows, c);
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; xv.rows];
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for k in 0..c {
                let h = (row[k] - mean) * is;
                xhat[r * c + k] = h;
                out.data[r * c + k] = g.data[k] * h + b.data[k];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut t = self.value(a).clone();
        t.data.iter_mut().for_each(|x| *x = 0.5 * *x * (1.0 + (GELU_C * (*x + GELU_A * x.powi(3))).tanh()));
        self.push(t, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut t = self.value(a).clone();
        for r in 0..t.rows {
            let row = t.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            row.iter_mut().for_each(|v| {
                *v = (*v - m).exp();
                s += *v;
            });
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push(t, Op::Softmax(a))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start > end || end > x.rows {
            return Err(Error::ShapeMismatch(format!("rows {start}..{end} of {}", x.rows)));
        }
        let t = Tensor { rows: end - start, cols: x.cols, data: x.data[start * x.cols..end * x.cols].to_vec() };
        Ok(self.push(t, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start > end || end > x.cols {
            return Err(Error::ShapeMismatch(format!("cols {start}..{end} of {}", x.cols)));
        }
        let mut data = Vec::with_capacity(x.rows * (end - start));
        for r in 0..x.rows {
            data.extend_from_slice(&x.row(r)[start..end]);
        }
        let t = Tensor { rows: x.rows, cols: end - start, data };
        Ok(self.push(t, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let x = self.value(*p);
            if x.cols != cols {
                return Err(Error::ShapeMismatch(format!("concat_rows: {} vs {cols} columns", x.cols)));
            }
            data.extend_from_slice(&x.data);
            rows += x.rows;
        }
        Ok(self.push(Tensor { rows, cols, data }, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows;
        if parts.iter().any(|p| self.value(*p).rows != rows) {
            return Err(Error::ShapeMismatch("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        Ok(self.push(Tensor { rows, cols, data }, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean squared error over rows where `keep` is true and all columns.
    pub fn masked_mse(&mut self, pred: Var, target: Var, keep: &[bool]) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        same_shape(p, t, "masked_mse")?;
        if keep.len() != p.rows {
            return Err(Error::ShapeMismatch(format!("mask of {} for {} rows", keep.len(), p.rows)));
        }
        let rows: Vec<usize> = (0..p.rows).filter(|r| keep[*r]).collect();
        if rows.is_empty() {
            return Err(Error::AllMasked);
        }
        let count = (rows.len() * p.cols) as f64;
        let mut s = 0.0;
        for &r in &rows {
            s += p.row(r).iter().zip(t.row(r)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(self.push(Tensor::scalar(s / count), Op::MaskedMse { pred, target, rows, count }))
    }

    /// Sum over windows `[lo, hi]` of `|u[t + 1] - u[t]|` for every `t` in
    /// the window with `t + 1 < rows`, summed over columns and divided by the
    /// column count.
    pub fn window_l1(&mut self, u: Var, windows: &[(usize, usize)]) -> Var {
        let x = self.value(u);
        let mut pairs = Vec::new();
        if x.rows >= 2 {
            for &(lo, hi) in windows {
                pairs.extend(lo..=hi.min(x.rows - 2));
            }
        }
        let mut s = 0.0;
        for &t in &pairs {
            s += x.row(t + 1).iter().zip(x.row(t)).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        let channels = x.cols as f64;
        self.push(Tensor::scalar(s / channels), Op::WindowL1 { u, pairs, channels })
    }

    /// `sqrt(mean(a^2))`.
    pub fn rms(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = (x.data.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        self.push(Tensor::scalar(v), Op::Rms(a))
    }

    /// Raw `T x 263` features to `T x 66` joint positions, integrating the
    /// root from `start`.
    pub fn decode(&mut self, features: Var, start: RootState) -> Result<Var> {
        let f = self.value(features);
        if f.cols != FEATURE_DIM {
            return Err(Error::WrongWidth { expected: FEATURE_DIM, found: f.cols });
        }
        let t = f.rows;
        let k = CANONICAL_JOINTS;
        let mut out = Tensor::zeros(t, 3 * k);
        let mut headings = Vec::with_capacity(t);
        let (mut h, mut p) = (start.heading, [start.position[0], start.position[1]]);
        for n in 0..t {
            let row = f.row(n);
            headings.push(h);
            let root = [p[0], p[1], row[ROOT_HEIGHT]];
            let o = out.row_mut(n);
            o[..3].copy_from_slice(&root);
            for j in 1..k {
                let i = LOCAL_POS + 3 * (j - 1);
                let v = vec3::add(root, vec3::rotate_z([row[i], row[i + 1], row[i + 2]], h));
                o[3 * j..3 * j + 3].copy_from_slice(&v);
            }
            let v = vec3::rotate_z([row[ROOT_LIN_VEL], row[ROOT_LIN_VEL + 1], 0.0], h);
            p[0] += v[0];
            p[1] += v[1];
            h += row[ROOT_ANG_VEL];
        }
        if !out.is_finite() {
            return Err(Error::DecodeFailure("non-finite joint positions".into()));
        }
        Ok(self.push(out, Op::Decode { f: features, headings }))
    }

    /// Mean over entries `(frame, i, j)` with target distance below
    /// `threshold` of `| |x_i - y_j| - target |`. Zero when nothing is masked in.
    ///
    /// `x` and `y` are `T x 3K` joint tensors; `target` holds `T * K * K`
    /// distances.
    pub fn distance_l1(&mut self, x: Var, y: Var, target: &[f64], threshold: f64) -> Result<Var> {
        let (a, b) = (self.value(x), self.value(y));
        same_shape(a, b, "distance_l1")?;
        let k = a.cols / 3;
        if a.cols % 3 != 0 || target.len() != a.rows * k * k {
            return Err(Error::ShapeMismatch(format!("distance map of {} for {:?}", target.len(), a.shape())));
        }
        let mut s = 0.0;
        let mut count = 0;
        for n in 0..a.rows {
            for i in 0..k {
                for j in 0..k {
                    let d0 = target[(n * k + i) * k + j];
                    if d0 < threshold {
                        let d = vec3::dist(joint(a, n, i), joint(b, n, j));
                        s += (d - d0).abs();
                        count += 1;
                    }
                }
            }
        }
        let v = if count == 0 { 0.0 } else { s / count as f64 };
        Ok(self.push(Tensor::scalar(v), Op::DistanceL1 { x, y, target: target.to_vec(), threshold, count }))
    }

    /// Accumulates `d loss / d params` into `grad` (same length as the
    /// parameter vector). `loss` must be a `1 x 1` node.
    pub fn backward(&self, loss: Var, grad: &mut [f64]) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch("backward needs a scalar loss".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!("{} gradient slots for {} params", grad.len(), self.params.len())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param { offset } => {
                    grad[*offset..*offset + g.len()].iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    gemm(View::of(&g), View::t(y), &mut ga, 0.0);
                    let mut gb = Tensor::zeros(y.rows, y.cols);
                    gemm(View::t(x), View::of(&g), &mut gb, 0.0);
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::MatMulT(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    gemm(View::of(&g), View::of(y), &mut ga, 0.0);
                    let mut gb = Tensor::zeros(y.rows, y.cols);
                    gemm(View::t(&g), View::of(x), &mut gb, 0.0);
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.data.iter_mut().for_each(|v| *v = -*v);
                    send(*a, g);
                    send(*b, neg);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    ga.data.iter_mut().zip(&y.data).for_each(|(v, q)| *v *= q);
                    let mut gb = g;
                    gb.data.iter_mut().zip(&x.data).for_each(|(v, p)| *v *= p);
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::AddRow(a, r) => {
                    let mut gr = Tensor::zeros(1, g.cols);
                    for n in 0..g.rows {
                        gr.data.iter_mut().zip(g.row(n)).for_each(|(s, v)| *s += v);
                    }
                    send(*r, gr);
                    send(*a, g);
                }
                Op::MulRow(a, r) => {
                    let (x, row) = (self.value(*a), self.value(*r));
                    let mut gr = Tensor::zeros(1, g.cols);
                    let mut ga = g.clone();
                    for n in 0..g.rows {
                        for c in 0..g.cols {
                            gr.data[c] += g.data[n * g.cols + c] * x.data[n * g.cols + c];
                            ga.data[n * g.cols + c] *= row.data[c];
                        }
                    }
                    send(*a, ga);
                    send(*r, gr);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.data.iter_mut().for_each(|v| *v *= s);
                    send(*a, ga);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gm = self.value(*gamma);
                    let c = g.cols;
                    let mut gx = Tensor::zeros(g.rows, c);
                    let mut gg = Tensor::zeros(1, c);
                    let mut gb = Tensor::zeros(1, c);
                    for n in 0..g.rows {
                        let gr = g.row(n);
                        let h = &xhat[n * c..(n + 1) * c];
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for k in 0..c {
                            gg.data[k] += gr[k] * h[k];
                            gb.data[k] += gr[k];
                            let d = gr[k] * gm.data[k];
                            m1 += d;
                            m2 += d * h[k];
                        }
                        m1 /= c as f64;
                        m2 /= c as f64;
                        let out = gx.row_mut(n);
                        for k in 0..c {
                            out[k] = inv_std[n] * (gr[k] * gm.data[k] - m1 - h[k] * m2);
                        }
                    }
                    send(*x, gx);
                    send(*gamma, gg);
                    send(*beta, gb);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    ga.data.iter_mut().zip(&x.data).for_each(|(v, x)| {
                        let th = (GELU_C * (x + GELU_A * x.powi(3))).tanh();
                        let d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        *v *= d;
                    });
                    send(*a, ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for n in 0..y.rows {
                        let yr = y.row(n);
                        let gr = ga.row_mut(n);
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        gr.iter_mut().zip(yr).for_each(|(v, q)| *v = q * (*v - dot));
                    }
                    send(*a, ga);
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    ga.data[start * x.cols..start * x.cols + g.len()].copy_from_slice(&g.data);
                    send(*a, ga);
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for n in 0..x.rows {
                        ga.row_mut(n)[*start..start + g.cols].copy_from_slice(g.row(n));
                    }
                    send(*a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let x = self.value(*p);
                        let t = Tensor { rows: x.rows, cols: x.cols, data: g.data[at..at + x.len()].to_vec() };
                        at += x.len();
                        send(*p, t);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let x = self.value(*p);
                        let mut t = Tensor::zeros(x.rows, x.cols);
                        for n in 0..x.rows {
                            t.row_mut(n).copy_from_slice(&g.row(n)[at..at + x.cols]);
                        }
                        at += x.cols;
                        send(*p, t);
                    }
                }
                Op::MaskedMse { pred, target, rows, count } => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let s = g.data[0] * 2.0 / count;
                    let mut gp = Tensor::zeros(p.rows, p.cols);
                    for &r in rows {
                        let out = gp.row_mut(r);
                        for (c, o) in out.iter_mut().enumerate() {
                            *o = s * (p.data[r * p.cols + c] - t.data[r * p.cols + c]);
                        }
                    }
                    let mut gt = gp.clone();
                    gt.data.iter_mut().for_each(|v| *v = -*v);
                    send(*pred, gp);
                    send(*target, gt);
                }
                Op::WindowL1 { u, pairs, channels } => {
                    let x = self.value(*u);
                    let s = g.data[0] / channels;
                    let mut gu = Tensor::zeros(x.rows, x.cols);
                    for &t in pairs {
                        for c in 0..x.cols {
                            let d = x.data[(t + 1) * x.cols + c] - x.data[t * x.cols + c];
                            let sg = if d > 0.0 {
                                s
                            } else if d < 0.0 {
                                -s
                            } else {
                                0.0
                            };
                            gu.data[(t + 1) * x.cols + c] += sg;
                            gu.data[t * x.cols + c] -= sg;
                        }
                    }
                    send(*u, gu);
                }
                Op::Rms(a) => {
                    let x = self.value(*a);
                    let r = node.value.data[0];
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    if r > 0.0 {
                        let s = g.data[0] / (x.len() as f64 * r);
                        ga.data.iter_mut().zip(&x.data).for_each(|(o, v)| *o = s * v);
                    }
                    send(*a, ga);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    send(*a, Tensor { rows: x.rows, cols: x.cols, data: vec![g.data[0]; x.len()] });
                }
                Op::Decode { f, headings } => {
                    send(*f, decode_backward(self.value(*f), headings, &g));
                }
                Op::DistanceL1 { x, y, target, threshold, count } => {
                    let (a, b) = (self.value(*x), self.value(*y));
                    let mut ga = Tensor::zeros(a.rows, a.cols);
                    let mut gb = Tensor::zeros(b.rows, b.cols);
                    if *count > 0 {
                        let s = g.data[0] / *count as f64;
                        let k = a.cols / 3;
                        for n in 0..a.rows {
                            for i in 0..k {
                                for j in 0..k {
                                    let d0 = target[(n * k + i) * k + j];
                                    if d0 >= *threshold {
                                        continue;
                                    }
                                    let diff = vec3::sub(joint(a, n, i), joint(b, n, j));
                                    let d = vec3::norm(diff);
                                    if d == 0.0 || d == d0 {
                                        continue;
                                    }
                                    let w = if d > d0 { s / d } else { -s / d };
                                    for c in 0..3 {
                                        ga.data[n * a.cols + 3 * i + c] += w * diff[c];
                                        gb.data[n * b.cols + 3 * j + c] -= w * diff[c];
                                    }
                                }
                            }
                        }
                    }
                    send(*x, ga);
                    send(*y, gb);
                }
            }
        }
        Ok(())
    }
}

fn joint(t: &Tensor, frame: usize, j: usize) -> [f64; 3] {
    let r = t.row(frame);
    [r[3 * j], r[3 * j + 1], r[3 * j + 2]]
}

fn decode_backward(f: &Tensor, headings: &[f64], g: &Tensor) -> Tensor {
    let t = f.rows;
    let k = CANONICAL_JOINTS;
    let mut gf = Tensor::zeros(t, FEATURE_DIM);
    // Gradient reaching each frame's planar root position and heading directly.
    let mut g_planar = vec![[0.0; 2]; t];
    let mut g_heading = vec![0.0; t];
    for n in 0..t {
        let (row, gr, h) = (f.row(n), g.row(n), headings[n]);
        let mut gz = gr[2];
        let mut gp = [gr[0], gr[1]];
        let out = gf.row_mut(n);
        for j in 1..k {
            let gj = [gr[3 * j], gr[3 * j + 1], gr[3 * j + 2]];
            gp[0] += gj[0];
            gp[1] += gj[1];
            gz += gj[2];
            let i = LOCAL_POS + 3 * (j - 1);
            let back = vec3::rotate_z(gj, -h);
            out[i] = back[0];
            out[i + 1] = back[1];
            out[i + 2] = gj[2];
            let r = vec3::rotate_z([row[i], row[i + 1], 0.0], h);
            let dr = rot90([r[0], r[1]]);
            g_heading[n] += gj[0] * dr[0] + gj[1] * dr[1];
        }
        out[ROOT_HEIGHT] = gz;
        g_planar[n] = gp;
    }
    // Planar position n sums rotated velocities of frames m < n; heading n sums
    // angular velocities of frames m < n.
    let mut suffix_p = [0.0; 2];
    let mut suffix_h = 0.0;
    for m in (0..t).rev() {
        let row = f.row(m);
        let h = headings[m];
        let out = gf.row_mut(m);
        let back = vec3::rotate_z([suffix_p[0], suffix_p[1], 0.0], -h);
        out[ROOT_LIN_VEL] = back[0];
        out[ROOT_LIN_VEL + 1] = back[1];
        let v = vec3::rotate_z([row[ROOT_LIN_VEL], row[ROOT_LIN_VEL + 1], 0.0], h);
        let dv = rot90([v[0], v[1]]);
        let total_h = g_heading[m] + suffix_p[0] * dv[0] + suffix_p[1] * dv[1];
        out[ROOT_ANG_VEL] = suffix_h;
        suffix_h += total_h;
        suffix_p[0] += g_planar[m][0];
        suffix_p[1] += g_planar[m][1];
    }
    gf
}
