//! Motion sequences and their channel layouts.
//!
//! Two layout families are supported:
//!
//! * `PosVelRot6d` ("IH262" at 22 joints): per frame, global joint positions
//!   (J*3), global joint velocities (J*3), local 6D rotations for every
//!   non-root joint ((J-1)*6), and 4 foot-contact flags. 22 joints gives the
//!   canonical 262 channels.
//! * `RotRows6d` ("IX56x6" at 55 joints): per frame, (J+1) rows of 6 values.
//!   Row 0 packs root translation and root velocity `[p_g, v_g]`; rows
//!   1..=J are per-joint local 6D rotations, the root row being the global
//!   root orientation. 55 joints gives the canonical 56x6 = 336 channels.

use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};
use crate::motion::rotation::{rot6d_to_matrix, Rotation6D};
use crate::motion::skeleton::SkeletonSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutKind {
    /// Positions + velocities + non-root 6D rotations + 4 contact flags.
    PosVelRot6d,
    /// Rows of 6: `[p_g, v_g]` then one 6D rotation per joint.
    RotRows6d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionLayout {
    pub kind: LayoutKind,
    pub joints: usize,
}

impl MotionLayout {
    pub fn pos_vel_rot(joints: usize) -> Self {
        MotionLayout {
            kind: LayoutKind::PosVelRot6d,
            joints,
        }
    }

    pub fn rot_rows(joints: usize) -> Self {
        MotionLayout {
            kind: LayoutKind::RotRows6d,
            joints,
        }
    }

    /// Canonical 22-joint variant (262 channels).
    pub fn ih262() -> Self {
        Self::pos_vel_rot(22)
    }

    /// Canonical 55-joint variant (56 rows x 6 = 336 channels).
    pub fn ix56x6() -> Self {
        Self::rot_rows(55)
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            LayoutKind::PosVelRot6d => self.joints * 6 + (self.joints - 1) * 6 + 4,
            LayoutKind::RotRows6d => (self.joints + 1) * 6,
        }
    }

    pub fn tag(&self) -> String {
        match (self.kind, self.joints) {
            (LayoutKind::PosVelRot6d, 22) => "IH262".into(),
            (LayoutKind::RotRows6d, 55) => "IX56x6".into(),
            (LayoutKind::PosVelRot6d, j) => format!("IH-J{j}({})", self.dim()),
            (LayoutKind::RotRows6d, j) => format!("IX-J{j}({})", self.dim()),
        }
    }

    pub fn matches_skeleton(&self, skeleton: &SkeletonSpec) -> bool {
        skeleton.joint_count() == self.joints
    }

    // Channel offsets for PosVelRot6d.
    pub(crate) fn pos_offset(&self) -> usize {
        0
    }

    pub(crate) fn vel_offset(&self) -> usize {
        self.joints * 3
    }

    pub(crate) fn rot_offset(&self) -> usize {
        self.joints * 6
    }

    pub(crate) fn contact_offset(&self) -> usize {
        self.joints * 6 + (self.joints - 1) * 6
    }
}

/// A single person's motion clip: `frames x dim` row-major f32.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub layout: MotionLayout,
    pub frames: usize,
    pub data: Vec<f32>,
}

impl MotionSequence {
    pub fn new(layout: MotionLayout, frames: usize, data: Vec<f32>) -> Result<Self> {
        let seq = MotionSequence {
            layout,
            frames,
            data,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn zeros(layout: MotionLayout, frames: usize) -> Self {
        MotionSequence {
            layout,
            frames,
            data: vec![0.0; frames * layout.dim()],
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let d = self.dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let d = self.dim();
        &mut self.data[t * d..(t + 1) * d]
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(DuetError::InvalidSequence("zero frames".into()));
        }
        let want = self.frames * self.dim();
        if self.data.len() != want {
            return Err(DuetError::shape(
                format!("{} values ({}x{})", want, self.frames, self.dim()),
                format!("{}", self.data.len()),
            ));
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(DuetError::InvalidSequence("non-finite value".into()));
        }
        if self.layout.kind == LayoutKind::RotRows6d {
            for t in 0..self.frames {
                for j in 0..self.layout.joints {
                    // Decoding errors mark invalid rotation rows.
                    rot6d_to_matrix(&self.rotation(t, j))?;
                }
            }
        }
        Ok(())
    }

    /// Global position of `joint` at frame `t` (PosVelRot6d layouts only).
    pub fn position(&self, t: usize, joint: usize) -> [f64; 3] {
        debug_assert_eq!(self.layout.kind, LayoutKind::PosVelRot6d);
        let base = t * self.dim() + self.layout.pos_offset() + joint * 3;
        [
            self.data[base] as f64,
            self.data[base + 1] as f64,
            self.data[base + 2] as f64,
        ]
    }

    /// Local 6D rotation at frame `t`.
    ///
    /// For `PosVelRot6d`, `joint` indexes the non-root joints `1..J` (pass
    /// `joint - 1` semantics are avoided: pass the actual joint id, which must
    /// be >= 1). For `RotRows6d`, `joint` covers all joints including the
    /// root orientation at index 0.
    pub fn rotation(&self, t: usize, joint: usize) -> Rotation6D {
        let base = match self.layout.kind {
            LayoutKind::PosVelRot6d => {
                debug_assert!(joint >= 1, "PosVelRot6d stores no root rotation");
                t * self.dim() + self.layout.rot_offset() + (joint - 1) * 6
            }
            LayoutKind::RotRows6d => t * self.dim() + (joint + 1) * 6,
        };
        Rotation6D::from_f32(&self.data[base..base + 6])
    }

    /// Root translation at frame `t` (RotRows6d row 0 or the root position).
    pub fn root_translation(&self, t: usize) -> [f64; 3] {
        match self.layout.kind {
            LayoutKind::PosVelRot6d => self.position(t, 0),
            LayoutKind::RotRows6d => {
                let base = t * self.dim();
                [
                    self.data[base] as f64,
                    self.data[base + 1] as f64,
                    self.data[base + 2] as f64,
                ]
            }
        }
    }
}

/// A synchronized two-person clip with its text label and contact annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionPair {
    pub person_a: MotionSequence,
    pub person_b: MotionSequence,
    pub text: String,
    pub contact_annotated: bool,
}

impl InteractionPair {
    pub fn new(
        person_a: MotionSequence,
        person_b: MotionSequence,
        text: String,
        contact_annotated: bool,
    ) -> Result<Self> {
        if person_a.frames != person_b.frames || person_a.layout != person_b.layout {
            return Err(DuetError::shape(
                format!("matching clips ({}x{:?})", person_a.frames, person_a.layout),
                format!("{}x{:?}", person_b.frames, person_b.layout),
            ));
        }
        Ok(InteractionPair {
            person_a,
            person_b,
            text,
            contact_annotated,
        })
    }

    pub fn frames(&self) -> usize {
        self.person_a.frames
    }

    pub fn layout(&self) -> MotionLayout {
        self.person_a.layout
    }
}
