//! Voxelized penetration and contact metrics.

pub mod body;
pub mod metrics;
pub mod voxel;

pub use body::{BodyVolume, Capsule, WorldCapsule};
pub use metrics::{
    brute_force_overlap_oracle, contact_ratio, measure_sequence, min_surface_gap,
    pair_capsules, penetration_metrics, PenetrationReport, PhysicsParams, SequencePhysics,
};
pub use voxel::{
    segment_segment_distance, severe_threshold_voxels, VoxelGrid, DEFAULT_RESOLUTION,
};
