//! Capsule-per-bone body volume approximation.

use nalgebra::Vector3;

use crate::error::{DuetError, Result};
use crate::motion::skeleton::SkeletonSpec;

/// One capsule spanning two joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub joint_a: usize,
    pub joint_b: usize,
    pub radius: f64,
}

/// A realized capsule in world space.
#[derive(Debug, Clone, Copy)]
pub struct WorldCapsule {
    pub p0: Vector3<f64>,
    pub p1: Vector3<f64>,
    pub radius: f64,
}

/// Body occupancy model: one capsule per bone, radii from a per-bone table.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyVolume {
    pub capsules: Vec<Capsule>,
}

impl BodyVolume {
    pub fn new(capsules: Vec<Capsule>) -> Result<Self> {
        for c in &capsules {
            if c.radius <= 0.0 || !c.radius.is_finite() {
                return Err(DuetError::InvalidConfig(format!(
                    "capsule radius must be positive, got {}",
                    c.radius
                )));
            }
        }
        Ok(BodyVolume { capsules })
    }

    /// One capsule per parent-child bone, radius looked up by the child
    /// joint's name.
    pub fn from_skeleton(skeleton: &SkeletonSpec) -> Result<Self> {
        let mut capsules = Vec::new();
        for (j, &parent) in skeleton.parent_index.iter().enumerate() {
            if parent < 0 {
                continue;
            }
            capsules.push(Capsule {
                joint_a: parent as usize,
                joint_b: j,
                radius: bone_radius(&skeleton.joint_names[j]),
            });
        }
        Self::new(capsules)
    }

    /// Realize the capsules for one frame of joint positions.
    pub fn frame_capsules(&self, positions: &[Vector3<f64>]) -> Result<Vec<WorldCapsule>> {
        self.capsules
            .iter()
            .map(|c| {
                let p0 = *positions.get(c.joint_a).ok_or_else(|| {
                    DuetError::shape(format!("joint {}", c.joint_a), format!("{} joints", positions.len()))
                })?;
                let p1 = *positions.get(c.joint_b).ok_or_else(|| {
                    DuetError::shape(format!("joint {}", c.joint_b), format!("{} joints", positions.len()))
                })?;
                Ok(WorldCapsule {
                    p0,
                    p1,
                    radius: c.radius,
                })
            })
            .collect()
    }
}

/// Per-bone radius table for the toy skeleton; 5 cm for unknown bones.
fn bone_radius(child_name: &str) -> f64 {
    match child_name {
        "spine" => 0.12,        // torso
        "lower" => 0.10,        // legs
        "head" => 0.09,
        "l_shoulder" | "r_shoulder" => 0.06,
        "l_wrist" | "r_wrist" => 0.04, // arms
        _ => 0.05,
    }
}
