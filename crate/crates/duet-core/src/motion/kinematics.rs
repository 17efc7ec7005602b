//! Forward kinematics over 6D joint rotations.

use nalgebra::{Matrix3, Vector3};

use crate::error::{DuetError, Result};
use crate::motion::rotation::{rot6d_to_matrix, Rotation6D};
use crate::motion::sequence::{LayoutKind, MotionSequence};
use crate::motion::skeleton::SkeletonSpec;

/// Global joint positions for one pose.
///
/// The root sits at `root_translation`; every child sits at its parent's
/// position plus the parent's global rotation applied to the child's rest
/// offset. Global rotations compose down the chain, with `rotations[j]` the
/// local rotation of joint `j` (the root's being its world orientation).
pub fn forward_kinematics(
    skeleton: &SkeletonSpec,
    root_translation: Vector3<f64>,
    rotations: &[Rotation6D],
) -> Result<Vec<Vector3<f64>>> {
    let n = skeleton.joint_count();
    if rotations.len() != n {
        return Err(DuetError::shape(
            format!("{n} rotations"),
            format!("{}", rotations.len()),
        ));
    }
    let mut global_rot: Vec<Matrix3<f64>> = Vec::with_capacity(n);
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let local = rot6d_to_matrix(&rotations[j])?;
        let parent = skeleton.parent_index[j];
        if parent < 0 {
            global_rot.push(local);
            positions.push(root_translation);
        } else {
            let p = parent as usize;
            positions.push(positions[p] + global_rot[p] * skeleton.offset(j));
            global_rot.push(global_rot[p] * local);
        }
    }
    Ok(positions)
}

/// Per-frame global joint positions for a sequence.
///
/// `PosVelRot6d` layouts store global positions directly; `RotRows6d` runs
/// forward kinematics from the stored root translation and rotation rows.
pub fn joint_positions(
    seq: &MotionSequence,
    skeleton: &SkeletonSpec,
) -> Result<Vec<Vec<Vector3<f64>>>> {
    if !seq.layout.matches_skeleton(skeleton) {
        return Err(DuetError::shape(
            format!("skeleton with {} joints", seq.layout.joints),
            format!("{}", skeleton.joint_count()),
        ));
    }
    let j = seq.layout.joints;
    let mut out = Vec::with_capacity(seq.frames);
    match seq.layout.kind {
        LayoutKind::PosVelRot6d => {
            for t in 0..seq.frames {
                out.push(
                    (0..j)
                        .map(|joint| Vector3::from(seq.position(t, joint)))
                        .collect(),
                );
            }
        }
        LayoutKind::RotRows6d => {
            for t in 0..seq.frames {
                let root = Vector3::from(seq.root_translation(t));
                let rotations: Vec<Rotation6D> = (0..j).map(|joint| seq.rotation(t, joint)).collect();
                out.push(forward_kinematics(skeleton, root, &rotations)?);
            }
        }
    }
    Ok(out)
}
