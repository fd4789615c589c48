#![allow(dead_code)]

use std::path::{Path, PathBuf};

use intersyn_cli::commands::{self, SampleRequest, BUCKET_DIR, CHECKPOINT, CORPUS_DIR};
use intersyn_cli::manifest::Manifest;
use intersyn_cli::RunConfig;

/// A config small enough for the whole pipeline to finish in seconds.
pub fn tiny_config(seed: u64) -> RunConfig {
    let text = r#"{
        "synth": {"solo": 4, "pairs": 4, "frames": 60, "fps": 20},
        "interleave": {"buckets": 4, "frames": 60},
        "diffusion": {"kind": "cosine", "steps": 100},
        "denoiser": {"layers": 1, "width": 16, "heads": 2},
        "coordinator": {"layers": 1, "width": 16, "heads": 2},
        "train": {"epochs": 3, "learning_rate": 0.001},
        "refine": {"epochs": 2, "learning_rate": 0.001},
        "sample": {"substeps": 10},
        "eval": {"buckets": 130, "prompts": 2, "per_prompt": 10}
    }"#;
    let mut cfg = RunConfig::from_json(text).unwrap();
    cfg.seed = seed;
    cfg.train.seed = seed;
    if let Some(r) = cfg.refine.as_mut() {
        r.seed = seed;
    }
    cfg
}

pub struct PipelineRun {
    pub root: PathBuf,
    pub manifests: Vec<Manifest>,
}

/// synth, interleave, train, sample and eval under `root`.
pub fn run_pipeline(cfg: &RunConfig, root: &Path) -> PipelineRun {
    let dir = |s: &str| root.join(s);
    let mut manifests = vec![commands::synth(cfg, &dir("synth")).unwrap()];
    let corpus = dir("synth").join(CORPUS_DIR);
    manifests.push(commands::interleave(cfg, &corpus, &dir("interleave")).unwrap());
    manifests.push(commands::train(cfg, &dir("interleave").join(BUCKET_DIR), &dir("train")).unwrap());
    let ckpt = dir("train").join(CHECKPOINT);
    let req = SampleRequest { text: "two people meet and shake hands".into(), t_i: 0, t_s: Some(20), frames: None };
    manifests.push(commands::sample(cfg, &ckpt, &req, &dir("sample")).unwrap());
    manifests.push(commands::eval(cfg, &ckpt, &corpus, &dir("eval")).unwrap());
    PipelineRun { root: root.to_path_buf(), manifests }
}
