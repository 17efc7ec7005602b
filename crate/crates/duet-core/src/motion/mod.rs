//! Motion representations: rotations, skeletons, sequences, kinematics and
//! normalization.

pub mod kinematics;
pub mod norm;
pub mod rotation;
pub mod sequence;
pub mod skeleton;

pub use kinematics::{forward_kinematics, joint_positions};
pub use norm::{denorm, znorm, NormStats};
pub use rotation::{matrix_to_rot6d, rot6d_to_matrix, Rotation6D};
pub use sequence::{InteractionPair, LayoutKind, MotionLayout, MotionSequence};
pub use skeleton::SkeletonSpec;
