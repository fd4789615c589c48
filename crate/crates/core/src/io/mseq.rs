//! MSEQ-JSON: a versioned JSON container for one motion sequence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3::Vec3;
use crate::motion::{Layout, MotionSequence};
use crate::skeleton::Skeleton;

pub const MSEQ_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonRecord {
    /// Parent index per joint, `-1` for the root.
    pub parents: Vec<i64>,
    pub offsets: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl From<&Skeleton> for SkeletonRecord {
    fn from(sk: &Skeleton) -> Self {
        Self { parents: sk.signed_parents(), offsets: sk.offsets().to_vec(), names: sk.names().map(|n| n.to_vec()) }
    }
}

impl SkeletonRecord {
    pub fn to_skeleton(&self) -> Result<Skeleton> {
        Skeleton::from_signed_parents(&self.parents, self.offsets.clone(), self.names.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutTag {
    Joint,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseqFile {
    pub version: u32,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<SkeletonRecord>,
    pub layout: LayoutTag,
    pub frames: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl MseqFile {
    pub fn from_sequence(seq: &MotionSequence, skeleton: Option<&Skeleton>) -> Self {
        Self {
            version: MSEQ_VERSION,
            fps: seq.fps(),
            skeleton: skeleton.map(SkeletonRecord::from),
            layout: match seq.layout() {
                Layout::Joint { .. } => LayoutTag::Joint,
                Layout::Feature => LayoutTag::Feature,
            },
            frames: seq.frames(),
            width: seq.width(),
            data: seq.data().to_vec(),
        }
    }

    pub fn to_sequence(&self) -> Result<(MotionSequence, Option<Skeleton>)> {
        if self.version != MSEQ_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        let layout = match self.layout {
            LayoutTag::Feature => Layout::Feature,
            LayoutTag::Joint => {
                if self.width % 3 != 0 {
                    return Err(Error::Format(format!("joint layout width {} is not a multiple of 3", self.width)));
                }
                Layout::Joint { joints: self.width / 3 }
            }
        };
        if layout.width() != self.width || self.data.len() != self.frames * self.width {
            return Err(Error::Format(format!(
                "{} values do not fill {} frames of width {}",
                self.data.len(),
                self.frames,
                self.width
            )));
        }
        let skeleton = self.skeleton.as_ref().map(|s| s.to_skeleton()).transpose()?;
        if let (Some(sk), Layout::Joint { joints }) = (&skeleton, layout) {
            if sk.joint_count() != joints {
                return Err(Error::WrongJointCount { expected: sk.joint_count(), found: joints });
            }
        }
        Ok((MotionSequence::new(self.fps, layout, self.data.clone())?, skeleton))
    }
}

pub fn write_mseq(path: &Path, seq: &MotionSequence, skeleton: Option<&Skeleton>) -> Result<()> {
    std::fs::write(path, serde_json::to_vec(&MseqFile::from_sequence(seq, skeleton))?)?;
    Ok(())
}

pub fn read_mseq(path: &Path) -> Result<(MotionSequence, Option<Skeleton>)> {
    let file: MseqFile = serde_json::from_slice(&std::fs::read(path)?)?;
    file.to_sequence()
}
