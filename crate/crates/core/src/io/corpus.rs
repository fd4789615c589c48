//! On-disk corpus: an index file plus one MSEQ-JSON file per character.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::skeleton::Skeleton;

use super::mseq::{read_mseq, write_mseq};

pub const CORPUS_INDEX: &str = "corpus.json";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    Solo,
    Pair,
}

impl ClipKind {
    pub fn characters(&self) -> usize {
        match self {
            ClipKind::Solo => 1,
            ClipKind::Pair => 2,
        }
    }
}

/// A described clip of one or two characters sharing a skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub kind: ClipKind,
    pub text: String,
    pub skeleton: Skeleton,
    pub motions: Vec<MotionSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub kind: ClipKind,
    pub text: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusIndex {
    pub version: u32,
    pub entries: Vec<CorpusEntry>,
}

/// Writes clips under `dir` and returns the index that was saved.
pub fn write_corpus(dir: &Path, clips: &[Clip]) -> Result<CorpusIndex> {
    std::fs::create_dir_all(dir.join("motions"))?;
    let mut entries = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        if clip.motions.len() != clip.kind.characters() {
            return Err(Error::InvalidInput(format!("clip {i} has {} motions", clip.motions.len())));
        }
        let mut files = Vec::new();
        for (c, m) in clip.motions.iter().enumerate() {
            let name = format!("motions/{i:05}_{c}.mseq.json");
            write_mseq(&dir.join(&name), m, Some(&clip.skeleton))?;
            files.push(name);
        }
        entries.push(CorpusEntry { kind: clip.kind, text: clip.text.clone(), files });
    }
    let index = CorpusIndex { version: CORPUS_VERSION, entries };
    std::fs::write(dir.join(CORPUS_INDEX), serde_json::to_vec_pretty(&index)?)?;
    Ok(index)
}

pub fn read_corpus(dir: &Path) -> Result<Vec<Clip>> {
    let index: CorpusIndex = serde_json::from_slice(&std::fs::read(dir.join(CORPUS_INDEX))?)?;
    if index.version != CORPUS_VERSION {
        return Err(Error::UnsupportedVersion(index.version));
    }
    index
        .entries
        .iter()
        .map(|e| {
            if e.files.len() != e.kind.characters() {
                return Err(Error::Format(format!("{:?} entry lists {} files", e.kind, e.files.len())));
            }
            let mut skeleton = None;
            let mut motions = Vec::new();
            for f in &e.files {
                let (m, sk) = read_mseq(&dir.join(f))?;
                let sk = sk.ok_or_else(|| Error::Format(format!("{f} has no skeleton")))?;
                if skeleton.as_ref().is_some_and(|s| s != &sk) {
                    return Err(Error::SkeletonMismatch(format!("{f} differs from its partner")));
                }
                skeleton = Some(sk);
                motions.push(m);
            }
            Ok(Clip { kind: e.kind, text: e.text.clone(), skeleton: skeleton.expect("at least one file"), motions })
        })
        .collect()
}

/// SHA-256 over the index and every motion file, in index order.
pub fn corpus_digest(dir: &Path) -> Result<String> {
    let raw = std::fs::read(dir.join(CORPUS_INDEX))?;
    let index: CorpusIndex = serde_json::from_slice(&raw)?;
    let mut h = Sha256::new();
    h.update(&raw);
    for e in &index.entries {
        for f in &e.files {
            h.update(std::fs::read(dir.join(f))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}
