//! Encoded buckets on disk: an index with schedule sidecars plus MSEQ-JSON
//! feature files for each character.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interleave::{SegmentSchedule, TextEmbedding};
use crate::motion::{Layout, RootState};
use crate::pipeline::EncodedBucket;
use crate::training::SampleKind;

use super::mseq::{read_mseq, write_mseq};

pub const BUCKET_INDEX: &str = "buckets.json";
pub const BUCKET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSidecar {
    pub kind: SampleKind,
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    pub schedule: SegmentSchedule,
    pub text: TextEmbedding,
    pub boundary_mask: Vec<bool>,
    pub origins: [RootState; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketIndex {
    pub version: u32,
    pub entries: Vec<BucketSidecar>,
}

pub fn write_buckets(dir: &Path, buckets: &[EncodedBucket]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(buckets.len());
    for (i, b) in buckets.iter().enumerate() {
        let tag = match b.kind {
            SampleKind::Interleaved => "bucket",
            SampleKind::Solo => "solo",
        };
        let x = format!("{tag}_{i:05}_x.mseq.json");
        write_mseq(&dir.join(&x), &b.x, None)?;
        let y = match &b.y {
            Some(y) => {
                let name = format!("{tag}_{i:05}_y.mseq.json");
                write_mseq(&dir.join(&name), y, None)?;
                Some(name)
            }
            None => None,
        };
        entries.push(BucketSidecar {
            kind: b.kind,
            x,
            y,
            schedule: b.schedule.clone(),
            text: b.text.clone(),
            boundary_mask: b.boundary_mask.clone(),
            origins: b.origins,
        });
    }
    let index = BucketIndex { version: BUCKET_VERSION, entries };
    std::fs::write(dir.join(BUCKET_INDEX), serde_json::to_vec_pretty(&index)?)?;
    Ok(())
}

pub fn read_buckets(dir: &Path) -> Result<Vec<EncodedBucket>> {
    let index: BucketIndex = serde_json::from_slice(&std::fs::read(dir.join(BUCKET_INDEX))?)?;
    if index.version != BUCKET_VERSION {
        return Err(Error::UnsupportedVersion(index.version));
    }
    index
        .entries
        .into_iter()
        .map(|e| {
            let load = |name: &str| -> Result<_> {
                let (m, _) = read_mseq(&dir.join(name))?;
                if m.layout() != Layout::Feature || m.frames() != e.schedule.total() {
                    return Err(Error::Format(format!("{name} does not match its schedule")));
                }
                Ok(m)
            };
            let x = load(&e.x)?;
            let y = e.y.as_deref().map(load).transpose()?;
            if (e.kind == SampleKind::Interleaved) != y.is_some() || e.boundary_mask.len() != x.frames() {
                return Err(Error::Format(format!("inconsistent sidecar for {}", e.x)));
            }
            Ok(EncodedBucket {
                kind: e.kind,
                x,
                y,
                schedule: e.schedule,
                text: e.text,
                boundary_mask: e.boundary_mask,
                origins: e.origins,
            })
        })
        .collect()
}
