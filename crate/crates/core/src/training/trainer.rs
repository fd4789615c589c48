//! Two-stage optimization: the denoiser first, then the coordinator against
//! the frozen denoiser.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{FeatureStats, SampleKind, TrainingSample};
use super::losses::{LossWeights, DM_THRESHOLD};
use super::optim::Adam;
use crate::diffusion::{forward_noise_with, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::motion::FEATURE_DIM;
use crate::networks::{coordinator_forward, denoise, denoiser_forward, split_pair, CoordinatorParams, DenoiserParams};
use crate::nn::{Graph, Tensor, Var};

/// Interleaved and solo-only batch counts within one alternation cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alternation {
    pub interleaved: usize,
    pub solo: usize,
}

impl Default for Alternation {
    fn default() -> Self {
        Self { interleaved: 1, solo: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub alternation: Alternation,
    pub dm_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            epochs: 200,
            batch_size: 8,
            seed: 0,
            alternation: Alternation::default(),
            dm_threshold: DM_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
        }
        if self.alternation.interleaved == 0 {
            return Err(Error::InvalidInput("alternation needs at least one interleaved batch per cycle".into()));
        }
        if !(self.dm_threshold > 0.0) {
            return Err(Error::InvalidInput(format!("distance-map threshold {} must be positive", self.dm_threshold)));
        }
        Ok(())
    }
}

/// Per-epoch log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_smooth: f64,
    pub loss_rela: Option<f64>,
    pub loss_dm: Option<f64>,
    pub wall_ms: u64,
}

/// Loss components averaged over some set of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub rec: f64,
    pub smooth: f64,
    pub rela: f64,
    pub dm: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts, w: f64) {
        self.total += w * o.total;
        self.rec += w * o.rec;
        self.smooth += w * o.smooth;
        self.rela += w * o.rela;
        self.dm += w * o.dm;
    }
}

/// Training samples split by kind.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub interleaved: Vec<TrainingSample>,
    pub solo: Vec<TrainingSample>,
    pub stats: Option<FeatureStats>,
}

impl Dataset {
    pub fn new(samples: Vec<TrainingSample>, stats: FeatureStats) -> Self {
        let (interleaved, solo) = samples.into_iter().partition(|s| s.kind == SampleKind::Interleaved);
        Self { interleaved, solo, stats: Some(stats) }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for one `(stage, epoch, position)` cell.
pub fn derive_seed(seed: u64, stage: u8, epoch: usize, position: usize) -> u64 {
    mix(mix(mix(seed ^ stage as u64) ^ epoch as u64) ^ position as u64)
}

fn noisy_input(s: &TrainingSample, sched: &DiffusionSchedule, seed: u64) -> Result<(Tensor, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.gen_range(0..sched.steps());
    let noisy = forward_noise_with(&s.x0.data, t, sched, &mut rng)?;
    Ok((Tensor::new(s.x0.rows, s.x0.cols, noisy.x_t)?, t))
}

fn stage1_graph(
    g: &mut Graph,
    ms: &DenoiserParams,
    s: &TrainingSample,
    x_t: Tensor,
    t: usize,
    w: &LossWeights,
) -> Result<(Var, LossParts)> {
    let x = g.input(x_t);
    let pred = denoiser_forward(g, &ms.arch, x, &s.cond, t)?;
    let target = g.input(s.x0.clone());
    let keep: Vec<bool> = s.masked.iter().map(|m| !m).collect();
    let rec = g.masked_mse(pred, target, &keep)?;
    let mut total = g.scale(rec, w.lambda1);
    let mut parts = LossParts { rec: g.scalar(rec), ..Default::default() };
    if s.kind == SampleKind::Interleaved && !s.windows.is_empty() {
        let smooth = g.window_l1(pred, &s.windows);
        parts.smooth = g.scalar(smooth);
        let ws = g.scale(smooth, w.lambda2);
        total = g.add(total, ws)?;
    }
    parts.total = g.scalar(total);
    Ok((total, parts))
}

/// Stage-1 loss and gradient for one sample with its own noise stream.
pub fn stage1_sample(
    ms: &DenoiserParams,
    s: &TrainingSample,
    sched: &DiffusionSchedule,
    w: &LossWeights,
    seed: u64,
) -> Result<(LossParts, Vec<f64>)> {
    let (x_t, t) = noisy_input(s, sched, seed)?;
    let mut g = Graph::new(&ms.values);
    let (loss, parts) = stage1_graph(&mut g, ms, s, x_t, t, w)?;
    let mut grad = vec![0.0; ms.values.len()];
    if parts.total.is_finite() {
        g.backward(loss, &mut grad)?;
    }
    Ok((parts, grad))
}

struct Stage2Inputs {
    ux: Tensor,
    uy: Tensor,
    reporting: LossParts,
}

fn stage2_inputs(
    ms: &DenoiserParams,
    s: &TrainingSample,
    sched: &DiffusionSchedule,
    w: &LossWeights,
    seed: u64,
) -> Result<Stage2Inputs> {
    let (x_t, t) = noisy_input(s, sched, seed)?;
    let mut g = Graph::new(&ms.values);
    let (_, reporting) = stage1_graph(&mut g, ms, s, x_t.clone(), t, w)?;
    let u_hat = denoise(ms, &x_t.data, &s.cond, t)?;
    let (ux, uy) = split_pair(&u_hat)?;
    let frames = s.frames();
    Ok(Stage2Inputs {
        ux: Tensor::new(frames, FEATURE_DIM, ux)?,
        uy: Tensor::new(frames, FEATURE_DIM, uy)?,
        reporting,
    })
}

/// Stage-2 loss and coordinator gradient for one sample. The denoiser output
/// is a single-step `x0` prediction from a seeded noise level.
#[allow(clippy::too_many_arguments)]
pub fn stage2_sample(
    mc: &CoordinatorParams,
    ms: &DenoiserParams,
    stats: &FeatureStats,
    s: &TrainingSample,
    sched: &DiffusionSchedule,
    w: &LossWeights,
    threshold: f64,
    seed: u64,
) -> Result<(LossParts, Vec<f64>)> {
    let inp = stage2_inputs(ms, s, sched, w, seed)?;
    let mut g = Graph::new(&mc.values);
    let ux = g.input(inp.ux);
    let uy = g.input(inp.uy);
    let phi_x = coordinator_forward(&mut g, &mc.arch, ux, uy, &s.cond.text)?;
    let phi_y = coordinator_forward(&mut g, &mc.arch, uy, phi_x, &s.cond.text)?;
    let diff = g.sub(phi_y, uy)?;
    let rela = g.rms(diff);
    let (std, mean) = stats.rows();
    let (std, mean) = (g.input(std), g.input(mean));
    let raw_x = g.mul_row(phi_x, std)?;
    let raw_x = g.add_row(raw_x, mean)?;
    let raw_y = g.mul_row(uy, std)?;
    let raw_y = g.add_row(raw_y, mean)?;
    let jx = g.decode(raw_x, s.origins[0])?;
    let jy = g.decode(raw_y, s.origins[1])?;
    let dm = g.distance_l1(jx, jy, &s.target_dm, threshold)?;
    let a = g.scale(rela, w.lambda3);
    let b = g.scale(dm, w.lambda4);
    let loss = g.add(a, b)?;
    let objective = g.scalar(loss);
    let parts = LossParts {
        total: inp.reporting.total + objective,
        rec: inp.reporting.rec,
        smooth: inp.reporting.smooth,
        rela: g.scalar(rela),
        dm: g.scalar(dm),
    };
    let mut grad = vec![0.0; mc.values.len()];
    if objective.is_finite() {
        g.backward(loss, &mut grad)?;
    }
    Ok((parts, grad))
}

/// Averages per-sample results in sample order.
fn reduce(results: Vec<(LossParts, Vec<f64>)>, len: usize) -> (LossParts, Vec<f64>) {
    let n = results.len() as f64;
    let mut parts = LossParts::default();
    let mut grad = vec![0.0; len];
    for (p, g) in &results {
        parts.add(p, 1.0 / n);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b / n);
    }
    (parts, grad)
}

/// The interleaved/solo batch sequence of one epoch, as sample references.
fn epoch_batches<'a>(data: &'a Dataset, cfg: &TrainConfig, stage: u8, epoch: usize) -> Vec<Vec<&'a TrainingSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stage, epoch, usize::MAX));
    let mut inter: Vec<&TrainingSample> = data.interleaved.iter().collect();
    inter.shuffle(&mut rng);
    let mut solo: Vec<&TrainingSample> = if stage == 1 { data.solo.iter().collect() } else { Vec::new() };
    solo.shuffle(&mut rng);
    let inter_batches: Vec<Vec<_>> = inter.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
    let solo_batches: Vec<Vec<_>> = solo.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
    if inter_batches.is_empty() {
        return solo_batches;
    }
    let mut out = Vec::new();
    let mut solo_iter = solo_batches.into_iter();
    for (i, b) in inter_batches.into_iter().enumerate() {
        out.push(b);
        if (i + 1) % cfg.alternation.interleaved == 0 {
            for _ in 0..cfg.alternation.solo {
                if let Some(s) = solo_iter.next() {
                    out.push(s);
                }
            }
        }
    }
    out.extend(solo_iter);
    out
}

fn record(stage: u8, epoch: usize, parts: &LossParts, start: Instant) -> EpochRecord {
    EpochRecord {
        stage,
        epoch,
        loss_total: parts.total,
        loss_rec: parts.rec,
        loss_smooth: parts.smooth,
        loss_rela: (stage == 2).then_some(parts.rela),
        loss_dm: (stage == 2).then_some(parts.dm),
        wall_ms: start.elapsed().as_millis() as u64,
    }
}

fn finite(parts: &LossParts, grad: &[f64]) -> bool {
    let p = [parts.total, parts.rec, parts.smooth, parts.rela, parts.dm];
    p.iter().all(|v| v.is_finite()) && grad.iter().all(|v| v.is_finite())
}

/// Trains the denoiser in place. `on_epoch` sees each record as it is made.
pub fn train_stage1(
    ms: &mut DenoiserParams,
    data: &Dataset,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    weights.validate()?;
    if data.interleaved.is_empty() && data.solo.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut opt = Adam::new(ms.values.len(), cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let batches = epoch_batches(data, cfg, 1, epoch);
        let mut epoch_parts = LossParts::default();
        let mut position = 0;
        for batch in &batches {
            let params = &*ms;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(i, s)| stage1_sample(params, s, sched, weights, derive_seed(cfg.seed, 1, epoch, position + i)))
                .collect::<Result<Vec<_>>>()?;
            position += batch.len();
            let (parts, grad) = reduce(results, ms.values.len());
            if !finite(&parts, &grad) {
                return Err(Error::DivergenceDetected { stage: 1, epoch });
            }
            opt.update(&mut ms.values, &grad);
            epoch_parts.add(&parts, 1.0 / batches.len() as f64);
        }
        let rec = record(1, epoch, &epoch_parts, start);
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(log)
}

/// Trains the coordinator in place against a frozen denoiser.
#[allow(clippy::too_many_arguments)]
pub fn train_stage2(
    mc: &mut CoordinatorParams,
    ms: &DenoiserParams,
    data: &Dataset,
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    weights.validate()?;
    let stats = data.stats.as_ref().ok_or_else(|| Error::InvalidInput("stage 2 needs feature statistics".into()))?;
    if data.interleaved.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut opt = Adam::new(mc.values.len(), cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let batches = epoch_batches(data, cfg, 2, epoch);
        let mut epoch_parts = LossParts::default();
        let mut position = 0;
        for batch in &batches {
            let params = &*mc;
            let results = batch
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let seed = derive_seed(cfg.seed, 2, epoch, position + i);
                    stage2_sample(params, ms, stats, s, sched, weights, cfg.dm_threshold, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            position += batch.len();
            let (parts, grad) = reduce(results, mc.values.len());
            if !finite(&parts, &grad) {
                return Err(Error::DivergenceDetected { stage: 2, epoch });
            }
            opt.update(&mut mc.values, &grad);
            epoch_parts.add(&parts, 1.0 / batches.len() as f64);
        }
        let rec = record(2, epoch, &epoch_parts, start);
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(log)
}

/// Mean stage-1 losses on fixed noise draws derived from `seed`.
pub fn evaluate_stage1(
    ms: &DenoiserParams,
    samples: &[TrainingSample],
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    seed: u64,
) -> Result<LossParts> {
    let results = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let (x_t, t) = noisy_input(s, sched, derive_seed(seed, 1, usize::MAX, i))?;
            let mut g = Graph::new(&ms.values);
            Ok((stage1_graph(&mut g, ms, s, x_t, t, weights)?.1, Vec::new()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(results, 0).0)
}

/// Mean stage-2 losses on fixed noise draws derived from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_stage2(
    mc: &CoordinatorParams,
    ms: &DenoiserParams,
    stats: &FeatureStats,
    samples: &[TrainingSample],
    sched: &DiffusionSchedule,
    weights: &LossWeights,
    threshold: f64,
    seed: u64,
) -> Result<LossParts> {
    let results = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let (p, _) = stage2_sample(mc, ms, stats, s, sched, weights, threshold, derive_seed(seed, 2, usize::MAX, i))?;
            Ok((p, Vec::new()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(results, 0).0)
}
