//! Binary checkpoints: magic, JSON header, little-endian `f32` payload, CRC32.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::FeatureStats;
use crate::diffusion::ScheduleDescriptor;
use crate::error::{Error, Result};
use crate::motion::RootState;
use crate::networks::{CoordinatorArch, CoordinatorParams, DenoiserArch, DenoiserParams};

pub const MAGIC: &[u8; 8] = b"ISYNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub stage: u8,
    pub seed: u64,
    pub denoiser: DenoiserArch,
    pub coordinator: Option<CoordinatorArch>,
    pub schedule: ScheduleDescriptor,
    pub stats: FeatureStats,
    /// Frame count the model was trained on.
    pub frames: usize,
    pub fps: f64,
    /// Typical frame-0 root of each character in the training buckets, used
    /// as the decoding start for sampled features.
    pub origins: [RootState; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub denoiser: DenoiserParams,
    pub coordinator: Option<CoordinatorParams>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut values: Vec<f64> = self.denoiser.values.clone();
        if let Some(c) = &self.coordinator {
            values.extend_from_slice(&c.values);
        }
        let mut out = Vec::with_capacity(24 + header.len() + 4 * values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut at = 8;
        let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
            let s = body.get(*at..*at + n).ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
            *at += n;
            Ok(s)
        };
        let hlen = u32::from_le_bytes(take(&mut at, 4)?.try_into().expect("four bytes")) as usize;
        let header: CheckpointHeader = serde_json::from_slice(take(&mut at, hlen)?)?;
        if header.version != VERSION {
            return Err(Error::UnsupportedVersion(header.version));
        }
        header.stats.validate()?;
        let count = u64::from_le_bytes(take(&mut at, 8)?.try_into().expect("eight bytes")) as usize;
        let raw = take(&mut at, count.checked_mul(4).ok_or_else(|| Error::Format("parameter count overflow".into()))?)?;
        if at != body.len() {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        let values: Vec<f64> = raw.chunks(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64).collect();
        let nd = header.denoiser.param_count();
        let nc = header.coordinator.map_or(0, |a| a.param_count());
        if values.len() != nd + nc {
            return Err(Error::Format(format!("payload has {} values, header implies {}", values.len(), nd + nc)));
        }
        let denoiser = DenoiserParams::from_values(header.denoiser, values[..nd].to_vec())?;
        let coordinator = header.coordinator.map(|a| CoordinatorParams::from_values(a, values[nd..].to_vec())).transpose()?;
        Ok(Self { header, denoiser, coordinator })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;

    fn sample() -> Checkpoint {
        let d = DenoiserArch { layers: 1, width: 8, heads: 2 };
        let c = CoordinatorArch { layers: 2, width: 8, heads: 2 };
        let mut ms = DenoiserParams::init(d, 1).unwrap();
        ms.values.iter_mut().for_each(|v| *v = (*v as f32) as f64);
        let mc = CoordinatorParams::init(c, 2).unwrap();
        Checkpoint {
            header: CheckpointHeader {
                version: VERSION,
                stage: 2,
                seed: 7,
                denoiser: d,
                coordinator: Some(c),
                schedule: ScheduleDescriptor { kind: ScheduleKind::Cosine, steps: 100 },
                stats: FeatureStats::identity(),
                frames: 48,
                fps: 20.0,
                origins: [RootState::new([0.0, -0.5, 0.9], 0.0), RootState::new([0.2, 0.5, 0.9], 3.0)],
            },
            denoiser: ms,
            coordinator: Some(mc.clone()).map(|mut m| {
                m.values.iter_mut().for_each(|v| *v = (*v as f32) as f64);
                m
            }),
        }
    }

    #[test]
    fn roundtrip() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = sample().to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checksum { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"nonsense-bytes-here-ok"), Err(Error::Format(_))));
    }
}
