//! `manifest.json`: what a command read, how it was configured, and a digest
//! of everything it wrote.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliResult;

pub const MANIFEST: &str = "manifest.json";

/// Outputs whose bytes vary between identical runs (wall-clock timings).
pub const VOLATILE: &[&str] = &["train.log.jsonl"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input name to SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn walk(root: &Path, rel: &str, out: &mut Vec<String>) -> CliResult<()> {
    let mut entries: Vec<_> = std::fs::read_dir(root.join(rel))?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        let path = if rel.is_empty() { name } else { format!("{rel}/{name}") };
        if e.file_type()?.is_dir() {
            walk(root, &path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Relative paths of every file under `root`, sorted.
pub fn list_files(root: &Path) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    walk(root, "", &mut out)?;
    Ok(out)
}

fn is_volatile(rel: &str) -> bool {
    let name = rel.rsplit('/').next().unwrap_or(rel);
    name == MANIFEST || VOLATILE.contains(&name)
}

/// Digest over the names and contents of the stable files in a directory.
pub fn sha256_dir(root: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    for rel in list_files(root)?.into_iter().filter(|r| !is_volatile(r)) {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(std::fs::read(root.join(&rel))?);
    }
    Ok(hex::encode(h.finalize()))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            tool: "intersyn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, name: &str, digest: String) -> Self {
        self.inputs.insert(name.into(), digest);
        self
    }

    /// Records every file under `out` and writes the manifest there.
    pub fn finish(mut self, out: &Path) -> CliResult<Self> {
        self.outputs = list_files(out)?
            .into_iter()
            .filter(|r| r != MANIFEST)
            .map(|rel| {
                if is_volatile(&rel) {
                    return Ok(OutputRecord { path: rel, bytes: None, sha256: None });
                }
                let p = out.join(&rel);
                Ok(OutputRecord { bytes: Some(std::fs::metadata(&p)?.len()), sha256: Some(sha256_file(&p)?), path: rel })
            })
            .collect::<CliResult<_>>()?;
        std::fs::write(out.join(MANIFEST), serde_json::to_vec_pretty(&self)?)?;
        Ok(self)
    }
}
