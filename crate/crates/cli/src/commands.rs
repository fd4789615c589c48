//! The five subcommands. Each writes under its `out` directory and finishes
//! with a manifest.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use intersyn_core::diffusion::{ddim_sample, DiffusionSchedule};
use intersyn_core::features::decode_features_from;
use intersyn_core::geometry::vec3;
use intersyn_core::interleave::{SegmentSchedule, SoloClip, TextEmbedding};
use intersyn_core::io::{
    corpus_digest, export_bvh, pseudo_embed, read_buckets, read_corpus, synth_corpus, write_buckets, write_corpus,
    write_mseq,
};
use intersyn_core::metrics::{self, hybrid_score, Extractor, FeatureVector, MetricsReport, ReportInputs};
use intersyn_core::networks::{
    refine_multi, refine_pair, split_pair, Conditioning, CoordinatorParams, DenoiserParams, PAIR_DIM,
};
use intersyn_core::pipeline::{build_buckets, prepare_clips, BucketPlan, EncodedBucket};
use intersyn_core::training::{
    derive_seed, train_stage1, train_stage2, Checkpoint, CheckpointHeader, Dataset, EpochRecord, FeatureStats,
    SampleKind, TrainingSample,
};
use intersyn_core::{Layout, MotionSequence, RootState, Skeleton};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_dir, sha256_file, Manifest};

pub const CORPUS_DIR: &str = "corpus";
pub const BUCKET_DIR: &str = "buckets";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train.log.jsonl";
pub const METRICS: &str = "metrics.json";

/// Seed streams derived from the master seed, one per pipeline step.
mod stream {
    pub const SYNTH: u8 = 10;
    pub const INTERLEAVE: u8 = 11;
    pub const INIT: u8 = 12;
    pub const SAMPLE: u8 = 13;
    pub const EVAL_BUCKETS: u8 = 14;
    pub const EVAL_GENERATE: u8 = 15;
    pub const EVAL_PROMPTS: u8 = 16;
    pub const EVAL_METRICS: u8 = 17;
}

fn prepare_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    prepare_out(out)?;
    let clips = synth_corpus(&cfg.synth.to_config(), derive_seed(cfg.seed, stream::SYNTH, 0, 0))?;
    write_corpus(&out.join(CORPUS_DIR), &clips)?;
    log::info!("wrote {} clips", clips.len());
    Manifest::new("synth", cfg).finish(out)
}

pub fn interleave(cfg: &RunConfig, corpus: &Path, out: &Path) -> CliResult<Manifest> {
    prepare_out(out)?;
    let clips = prepare_clips(&read_corpus(corpus)?)?;
    let plan = cfg.interleave.plan();
    let buckets = build_buckets(&clips, &plan, derive_seed(cfg.seed, stream::INTERLEAVE, 0, 0))?;
    let mut encoded = buckets.iter().map(EncodedBucket::from_bucket).collect::<Result<Vec<_>, _>>()?;
    if cfg.interleave.solo_samples {
        for c in &clips.solo {
            let frames = c.motion.frames().min(plan.frames);
            let cropped = SoloClip { motion: c.motion.slice(0, frames)?, text: c.text.clone() };
            encoded.push(EncodedBucket::from_solo(&cropped)?);
        }
    }
    write_buckets(&out.join(BUCKET_DIR), &encoded)?;
    log::info!("wrote {} buckets and {} solo samples", buckets.len(), encoded.len() - buckets.len());
    Manifest::new("interleave", cfg).input("corpus", corpus_digest(corpus)?).finish(out)
}

/// Mean frame-0 root per character over interleaved buckets; headings are
/// averaged on the circle.
fn mean_origins(buckets: &[EncodedBucket]) -> [RootState; 2] {
    let inter: Vec<_> = buckets.iter().filter(|b| b.kind == SampleKind::Interleaved).collect();
    if inter.is_empty() {
        return [RootState::default(); 2];
    }
    let n = inter.len() as f64;
    std::array::from_fn(|c| {
        let mut pos = [0.0; 3];
        let (mut s, mut co) = (0.0, 0.0);
        for b in &inter {
            pos = vec3::add(pos, vec3::scale(b.origins[c].position, 1.0 / n));
            s += b.origins[c].heading.sin();
            co += b.origins[c].heading.cos();
        }
        RootState::new(pos, s.atan2(co))
    })
}

pub fn train(cfg: &RunConfig, buckets: &Path, out: &Path) -> CliResult<Manifest> {
    prepare_out(out)?;
    let encoded = read_buckets(buckets)?;
    let first = encoded.first().ok_or(intersyn_core::Error::TooFewSamples { needed: 1, got: 0 })?;
    let frames = encoded.iter().find(|b| b.kind == SampleKind::Interleaved).unwrap_or(first).frames();
    let fps = first.x.fps();
    let stats = FeatureStats::fit(encoded.iter().flat_map(|b| std::iter::once(&b.x).chain(b.y.as_ref())))?;
    let samples = encoded
        .iter()
        .map(|b| TrainingSample::from_encoded(b, &stats))
        .collect::<Result<Vec<_>, _>>()?;
    let data = Dataset::new(samples, stats.clone());
    let sched = DiffusionSchedule::from_descriptor(&cfg.diffusion)?;

    let mut log_file = std::io::BufWriter::new(std::fs::File::create(out.join(TRAIN_LOG))?);
    let mut write_err = None;
    let mut on_epoch = |r: &EpochRecord| {
        if r.epoch % 50 == 0 {
            log::info!("stage {} epoch {} loss {:.5}", r.stage, r.epoch, r.loss_total);
        }
        let line = serde_json::to_string(r).expect("records serialize");
        if let Err(e) = writeln!(log_file, "{line}") {
            write_err.get_or_insert(e);
        }
    };

    let mut ms = DenoiserParams::init(cfg.denoiser, derive_seed(cfg.seed, stream::INIT, 1, 0))?;
    train_stage1(&mut ms, &data, &sched, &cfg.loss, &cfg.train, &mut on_epoch)?;
    let coordinator = match &cfg.refine {
        Some(stage2) if !data.interleaved.is_empty() => {
            let mut mc = CoordinatorParams::init(cfg.coordinator, derive_seed(cfg.seed, stream::INIT, 2, 0))?;
            train_stage2(&mut mc, &ms, &data, &sched, &cfg.loss, stage2, &mut on_epoch)?;
            Some(mc)
        }
        _ => None,
    };
    if let Some(e) = write_err {
        return Err(e.into());
    }
    log_file.flush()?;

    let ck = Checkpoint {
        header: CheckpointHeader {
            version: intersyn_core::training::checkpoint::VERSION,
            stage: if coordinator.is_some() { 2 } else { 1 },
            seed: cfg.seed,
            denoiser: cfg.denoiser,
            coordinator: coordinator.as_ref().map(|c| c.arch),
            schedule: cfg.diffusion,
            stats,
            frames,
            fps,
            origins: mean_origins(&encoded),
        },
        denoiser: ms,
        coordinator,
    };
    ck.save(&out.join(CHECKPOINT))?;
    Manifest::new("train", cfg).input("buckets", sha256_dir(buckets)?).finish(out)
}

/// Generated raw (denormalized) feature streams for one conditioning.
struct Generated {
    streams: Vec<MotionSequence>,
}

#[allow(clippy::too_many_arguments)]
fn generate(
    ck: &Checkpoint,
    sched: &DiffusionSchedule,
    cfg: &RunConfig,
    text: &TextEmbedding,
    schedule: &SegmentSchedule,
    people: usize,
    refine: bool,
    seed: u64,
) -> CliResult<Generated> {
    let frames = schedule.total();
    let cond = Conditioning::from_schedule(text.clone(), schedule);
    let s = &cfg.sample;
    let pairs = people.div_ceil(2);
    let raw = (0..pairs)
        .map(|p| ddim_sample(&ck.denoiser, &cond, frames * PAIR_DIM, sched, s.substeps, s.eta, derive_seed(seed, 0, 0, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seqs = Vec::with_capacity(people);
    for r in &raw {
        let (x, y) = split_pair(r)?;
        seqs.push(x);
        seqs.push(y);
    }
    seqs.truncate(people);
    if let (true, Some(mc)) = (refine, &ck.coordinator) {
        seqs = if people == 2 {
            let (x, y) = refine_pair(&raw[0], mc, text)?;
            vec![x, y]
        } else {
            refine_multi(&seqs, mc, text, s.iterations)?
        };
    }
    let stats = &ck.header.stats;
    let streams = seqs
        .iter()
        .map(|v| MotionSequence::new(ck.header.fps, Layout::Feature, stats.denormalize(v)))
        .collect::<Result<Vec<_>, _>>()?;
    if streams.iter().any(|m| m.data().iter().any(|v| !v.is_finite())) {
        return Err(intersyn_core::Error::NonFinite("sampled motion".into()).into());
    }
    Ok(Generated { streams })
}

/// Decoding start for character `i`; characters past the pair are placed
/// one meter apart along x.
fn origin_for(ck: &Checkpoint, i: usize) -> RootState {
    let base = ck.header.origins[i % 2];
    let shift = (i / 2) as f64;
    RootState::new(vec3::add(base.position, [shift, 0.0, 0.0]), base.heading)
}

#[derive(Debug, Clone)]
pub struct SampleRequest {
    pub text: String,
    pub t_i: usize,
    pub t_s: Option<usize>,
    pub frames: Option<usize>,
}

pub fn sample(cfg: &RunConfig, checkpoint: &Path, req: &SampleRequest, out: &Path) -> CliResult<Manifest> {
    let ck = Checkpoint::load(checkpoint)?;
    let frames = req.frames.unwrap_or(ck.header.frames);
    let schedule = SegmentSchedule::new(req.t_i, req.t_s, frames)?;
    let sched = DiffusionSchedule::from_descriptor(&ck.header.schedule)?;
    if cfg.sample.substeps > sched.steps() {
        return Err(CliError::Config(format!("sample.substeps exceeds the checkpoint's {} steps", sched.steps())));
    }
    prepare_out(out)?;
    let text = pseudo_embed(&req.text);
    let seed = derive_seed(cfg.seed, stream::SAMPLE, 0, 0);
    let g = generate(&ck, &sched, cfg, &text, &schedule, cfg.sample.people, cfg.sample.refine, seed)?;
    let sk = Skeleton::canonical();
    for (i, feats) in g.streams.iter().enumerate() {
        let (joints, _) = decode_features_from(feats, origin_for(&ck, i))?;
        write_mseq(&out.join(format!("sample_{i}.features.mseq.json")), feats, None)?;
        write_mseq(&out.join(format!("sample_{i}.mseq.json")), &joints, Some(&sk))?;
        std::fs::write(out.join(format!("sample_{i}.bvh")), export_bvh(&joints, &sk)?)?;
    }
    std::fs::write(out.join("schedule.json"), serde_json::to_vec_pretty(&schedule)?)?;
    Manifest::new("sample", cfg)
        .input("checkpoint", sha256_file(checkpoint)?)
        .input("text", hex_text(&req.text))
        .finish(out)
}

fn hex_text(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn pair_feature(ex: &Extractor, x: &MotionSequence, y: &MotionSequence) -> CliResult<FeatureVector> {
    let (a, b) = (ex.extract(x)?, ex.extract(y)?);
    Ok(a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Frame-weighted text matching distance of one generated bucket: solo
/// segments score the first character, interaction segments both.
fn bucket_hybrid(ex: &Extractor, bucket: &EncodedBucket, g: &Generated) -> CliResult<f64> {
    let segs = bucket.schedule.segments();
    let parts: Vec<&str> = bucket.text.source_text.split(" then ").collect();
    let seg_text = |k: usize| -> CliResult<FeatureVector> {
        let emb = if parts.len() == segs.len() { pseudo_embed(parts[k]) } else { bucket.text.clone() };
        Ok(ex.extract_text(&emb)?)
    };
    let index = |start: usize| segs.iter().position(|s| s.start == start).expect("segment of this schedule");
    let (x, y) = (&g.streams[0], &g.streams[1]);
    Ok(hybrid_score(
        &bucket.schedule,
        &bucket.boundary_mask,
        |s| Ok(dist(&ex.extract(&x.slice(s.start, s.end)?)?, &seg_text(index(s.start)).map_err(to_core)?)),
        |s| {
            let f = pair_feature(ex, &x.slice(s.start, s.end)?, &y.slice(s.start, s.end)?).map_err(to_core)?;
            Ok(dist(&f, &seg_text(index(s.start)).map_err(to_core)?))
        },
    )?)
}

fn to_core(e: CliError) -> intersyn_core::Error {
    match e {
        CliError::Core(c) => c,
        other => intersyn_core::Error::InvalidInput(other.to_string()),
    }
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, corpus: &Path, out: &Path) -> CliResult<Manifest> {
    let ck = Checkpoint::load(checkpoint)?;
    let sched = DiffusionSchedule::from_descriptor(&ck.header.schedule)?;
    prepare_out(out)?;
    let ex = Extractor::new(cfg.eval.extractor_seed);
    let clips = prepare_clips(&read_corpus(corpus)?)?;
    let plan = BucketPlan { buckets: cfg.eval.buckets, frames: ck.header.frames, timing: cfg.interleave.timing.clone() };
    let buckets = build_buckets(&clips, &plan, derive_seed(cfg.seed, stream::EVAL_BUCKETS, 0, 0))?
        .iter()
        .map(EncodedBucket::from_bucket)
        .collect::<Result<Vec<_>, _>>()?;
    let partner = |b: &EncodedBucket| b.y.clone().expect("interleaved buckets carry a partner");

    let real = buckets.par_iter().map(|b| pair_feature(&ex, &b.x, &partner(b))).collect::<CliResult<Vec<_>>>()?;
    let generated = buckets
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let seed = derive_seed(cfg.seed, stream::EVAL_GENERATE, 0, i);
            generate(&ck, &sched, cfg, &b.text, &b.schedule, 2, cfg.sample.refine, seed)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let gen_feats = generated
        .par_iter()
        .map(|g| pair_feature(&ex, &g.streams[0], &g.streams[1]))
        .collect::<CliResult<Vec<_>>>()?;
    let texts = buckets.iter().map(|b| ex.extract_text(&b.text)).collect::<Result<Vec<_>, _>>()?;
    let per_text = (0..cfg.eval.prompts)
        .map(|p| {
            (0..cfg.eval.per_prompt)
                .into_par_iter()
                .map(|k| {
                    let b = &buckets[p];
                    let seed = derive_seed(cfg.seed, stream::EVAL_PROMPTS, p, k);
                    let g = generate(&ck, &sched, cfg, &b.text, &b.schedule, 2, cfg.sample.refine, seed)?;
                    pair_feature(&ex, &g.streams[0], &g.streams[1])
                })
                .collect::<CliResult<Vec<_>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    let hybrid = buckets
        .par_iter()
        .zip(&generated)
        .map(|(b, g)| bucket_hybrid(&ex, b, g))
        .collect::<CliResult<Vec<_>>>()?;
    let hybrid_mean = hybrid.iter().sum::<f64>() / hybrid.len() as f64;

    let inputs = ReportInputs {
        real: &real,
        generated: &gen_feats,
        texts: &texts,
        per_text: &per_text,
        hybrid_score: Some(hybrid_mean),
    };
    let report: MetricsReport =
        metrics::report(&inputs, cfg.eval.extractor_seed, derive_seed(cfg.seed, stream::EVAL_METRICS, 0, 0))?;
    std::fs::write(out.join(METRICS), serde_json::to_vec_pretty(&report)?)?;
    Manifest::new("eval", cfg)
        .input("checkpoint", sha256_file(checkpoint)?)
        .input("corpus", corpus_digest(corpus)?)
        .finish(out)
}
