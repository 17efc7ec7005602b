//! Skeleton topology and rest pose.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};

/// Joint hierarchy with per-joint rest offsets (meters, from the parent).
///
/// `parent_index[j] == -1` marks the root; parents always precede children,
/// so a single forward pass resolves the chain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    pub parent_index: Vec<i32>,
    pub rest_offset: Vec<[f64; 3]>,
}

impl SkeletonSpec {
    pub fn new(
        joint_names: Vec<String>,
        parent_index: Vec<i32>,
        rest_offset: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let spec = SkeletonSpec {
            joint_names,
            parent_index,
            rest_offset,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn joint_count(&self) -> usize {
        self.parent_index.len()
    }

    pub fn offset(&self, joint: usize) -> Vector3<f64> {
        Vector3::from(self.rest_offset[joint])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.parent_index.len();
        if n == 0 {
            return Err(DuetError::InvalidSkeleton("no joints".into()));
        }
        if self.joint_names.len() != n || self.rest_offset.len() != n {
            return Err(DuetError::InvalidSkeleton(format!(
                "field lengths disagree: names {}, parents {}, offsets {}",
                self.joint_names.len(),
                n,
                self.rest_offset.len()
            )));
        }
        let mut roots = 0usize;
        for (j, &p) in self.parent_index.iter().enumerate() {
            if p < 0 {
                roots += 1;
            } else if p as usize >= j {
                return Err(DuetError::InvalidSkeleton(format!(
                    "joint {j} has parent {p}; parents must precede children"
                )));
            }
        }
        if roots != 1 {
            return Err(DuetError::InvalidSkeleton(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        if self.parent_index[0] >= 0 {
            return Err(DuetError::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, o) in self.rest_offset.iter().enumerate() {
            if !o.iter().all(|v| v.is_finite()) {
                return Err(DuetError::InvalidSkeleton(format!(
                    "non-finite rest offset at joint {j}"
                )));
            }
        }
        Ok(())
    }

    /// Stable content hash, recorded in dataset files for compatibility checks.
    pub fn content_hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("skeleton serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: SkeletonSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Eight-joint desk-scale body: pelvis, lower body, spine, head, and two
    /// shoulder/wrist arms. Rest pose is a T-pose, y up, meters.
    pub fn toy_eight_joint() -> Self {
        SkeletonSpec {
            joint_names: vec![
                "pelvis".into(),
                "lower".into(),
                "spine".into(),
                "head".into(),
                "l_shoulder".into(),
                "l_wrist".into(),
                "r_shoulder".into(),
                "r_wrist".into(),
            ],
            parent_index: vec![-1, 0, 0, 2, 2, 4, 2, 6],
            rest_offset: vec![
                [0.0, 0.0, 0.0],
                [0.0, -0.80, 0.0],
                [0.0, 0.32, 0.0],
                [0.0, 0.28, 0.0],
                [0.20, 0.22, 0.0],
                [0.50, 0.0, 0.0],
                [-0.20, 0.22, 0.0],
                [-0.50, 0.0, 0.0],
            ],
        }
    }

    /// Simple serial chain, mostly for kinematics tests.
    pub fn chain(offsets: &[[f64; 3]]) -> Self {
        let n = offsets.len();
        SkeletonSpec {
            joint_names: (0..n).map(|i| format!("j{i}")).collect(),
            parent_index: (0..n).map(|i| i as i32 - 1).collect(),
            rest_offset: offsets.to_vec(),
        }
    }
}
