//! Joint hierarchies and the canonical 22-joint body.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};

/// Number of joints in the canonical body.
pub const CANONICAL_JOINTS: usize = 22;

/// Canonical joint indices (HumanML3D / SMPL ordering).
pub mod joints {
    pub const PELVIS: usize = 0;
    pub const LEFT_HIP: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const LEFT_KNEE: usize = 4;
    pub const RIGHT_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const LEFT_ANKLE: usize = 7;
    pub const RIGHT_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const LEFT_FOOT: usize = 10;
    pub const RIGHT_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const LEFT_COLLAR: usize = 13;
    pub const RIGHT_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const LEFT_SHOULDER: usize = 16;
    pub const RIGHT_SHOULDER: usize = 17;
    pub const LEFT_ELBOW: usize = 18;
    pub const RIGHT_ELBOW: usize = 19;
    pub const LEFT_WRIST: usize = 20;
    pub const RIGHT_WRIST: usize = 21;
}

const CANONICAL_PARENTS: [Option<usize>; CANONICAL_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
];

const CANONICAL_NAMES: [&str; CANONICAL_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

// Rest pose faces +y with z up; the character's left side is -x.
const CANONICAL_OFFSETS: [Vec3; CANONICAL_JOINTS] = [
    [0.0, 0.0, 0.0],
    [-0.10, 0.0, -0.08],
    [0.10, 0.0, -0.08],
    [0.0, -0.02, 0.12],
    [0.0, 0.0, -0.38],
    [0.0, 0.0, -0.38],
    [0.0, 0.0, 0.14],
    [0.0, 0.0, -0.40],
    [0.0, 0.0, -0.40],
    [0.0, 0.02, 0.06],
    [0.0, 0.13, -0.04],
    [0.0, 0.13, -0.04],
    [0.0, 0.0, 0.21],
    [-0.08, 0.0, 0.12],
    [0.08, 0.0, 0.12],
    [0.0, 0.03, 0.10],
    [-0.12, 0.0, -0.02],
    [0.12, 0.0, -0.02],
    [0.0, 0.0, -0.26],
    [0.0, 0.0, -0.26],
    [0.0, 0.0, -0.25],
    [0.0, 0.0, -0.25],
];

/// A kinematic tree with rest offsets from each joint to its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
}

impl Skeleton {
    /// Validates and builds a skeleton. Joint 0 must be the only root and
    /// every parent index must precede its child.
    pub fn new(parents: Vec<Option<usize>>, offsets: Vec<Vec3>, names: Option<Vec<String>>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if parents.len() != offsets.len() {
            return Err(Error::InvalidSkeleton(format!(
                "{} parents but {} offsets",
                parents.len(),
                offsets.len()
            )));
        }
        if let Some(n) = &names {
            if n.len() != parents.len() {
                return Err(Error::InvalidSkeleton("name count differs from joint count".into()));
            }
        }
        if parents[0].is_some() {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(Error::InvalidSkeleton(format!("joint {j} has no parent"))),
                Some(p) if *p >= j => {
                    return Err(Error::InvalidSkeleton(format!("joint {j} has parent {p} not preceding it")))
                }
                _ => {}
            }
            if vec3::norm(offsets[j]) <= 0.0 {
                return Err(Error::InvalidSkeleton(format!("joint {j} has zero-length bone")));
            }
        }
        if offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSkeleton("non-finite offset".into()));
        }
        Ok(Self { parents, offsets, names })
    }

    /// The 22-joint body used throughout the pipeline.
    pub fn canonical() -> Self {
        Self {
            parents: CANONICAL_PARENTS.to_vec(),
            offsets: CANONICAL_OFFSETS.to_vec(),
            names: Some(CANONICAL_NAMES.iter().map(|s| s.to_string()).collect()),
        }
    }

    /// Canonical topology with every bone scaled by `factor`.
    pub fn canonical_scaled(factor: f64) -> Self {
        let mut sk = Self::canonical();
        for o in &mut sk.offsets {
            *o = vec3::scale(*o, factor);
        }
        sk
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offset(&self, j: usize) -> Vec3 {
        self.offsets[j]
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn name(&self, j: usize) -> String {
        self.names
            .as_ref()
            .map(|n| n[j].clone())
            .unwrap_or_else(|| format!("joint{j}"))
    }

    pub fn bone_length(&self, j: usize) -> f64 {
        vec3::norm(self.offsets[j])
    }

    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..self.joint_count()).filter(|&c| self.parents[c] == Some(j)).collect()
    }

    pub fn same_topology(&self, other: &Skeleton) -> bool {
        self.parents == other.parents
    }

    /// Parents as signed indices with -1 for the root (file formats use this).
    pub fn signed_parents(&self) -> Vec<i64> {
        self.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect()
    }

    pub fn from_signed_parents(parents: &[i64], offsets: Vec<Vec3>, names: Option<Vec<String>>) -> Result<Self> {
        let parents = parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(Error::InvalidSkeleton(format!("bad parent index {p}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parents, offsets, names)
    }
}
