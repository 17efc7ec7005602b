//! Penetration and contact metrics over generated pairs.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};
use crate::motion::kinematics::joint_positions;
use crate::motion::sequence::InteractionPair;
use crate::motion::skeleton::SkeletonSpec;
use crate::physics::body::{BodyVolume, WorldCapsule};
use crate::physics::voxel::{
    point_segment_distance, segment_segment_distance, severe_threshold_voxels, VoxelGrid,
};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub resolution: f64,
    /// 6-neighborhood dilation iterations applied for contact detection only.
    pub dilation_voxels: usize,
    /// Max per-frame undilated overlap a sequence may show and still count as
    /// valid contact.
    pub severe_threshold_voxels: usize,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        let resolution = crate::physics::voxel::DEFAULT_RESOLUTION;
        PhysicsParams {
            resolution,
            dilation_voxels: 1,
            severe_threshold_voxels: severe_threshold_voxels(resolution),
        }
    }
}

/// Per-sequence raw measurements backing the aggregate metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequencePhysics {
    pub frames: usize,
    pub mean_overlap: f64,
    pub max_overlap: usize,
    pub penetrating_frames: usize,
    pub dilated_contact: bool,
    pub severe: bool,
    pub valid_contact: bool,
    pub annotated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenetrationReport {
    /// Mean over sequences of the per-frame mean overlap voxel count.
    pub pv: f64,
    /// Same overlap statistic pooled over all frames of all sequences.
    pub pv_pooled: f64,
    /// Fraction of sequences with any penetrating frame.
    pub pfr: f64,
    /// Mean over sequences of (penetrating frames / frames).
    pub pdr: f64,
    /// Valid contacts / annotated sequences; `None` when nothing is
    /// annotated.
    pub contact_ratio: Option<f64>,
    pub annotated_count: usize,
    pub sequence_count: usize,
    pub params: PhysicsParams,
    pub per_sequence: Vec<SequencePhysics>,
}

/// Per-frame world capsules for both persons of a pair.
pub fn pair_capsules(
    pair: &InteractionPair,
    skeleton: &SkeletonSpec,
    body: &BodyVolume,
) -> Result<Vec<(Vec<WorldCapsule>, Vec<WorldCapsule>)>> {
    let pos_a = joint_positions(&pair.person_a, skeleton)?;
    let pos_b = joint_positions(&pair.person_b, skeleton)?;
    pos_a
        .iter()
        .zip(&pos_b)
        .map(|(pa, pb)| Ok((body.frame_capsules(pa)?, body.frame_capsules(pb)?)))
        .collect()
}

/// Closest approach between any capsule of `a` and any capsule of `b`,
/// measured surface-to-surface (negative when interpenetrating).
pub fn min_surface_gap(a: &[WorldCapsule], b: &[WorldCapsule]) -> f64 {
    let mut best = f64::INFINITY;
    for ca in a {
        for cb in b {
            let d = segment_segment_distance(&ca.p0, &ca.p1, &cb.p0, &cb.p1)
                - ca.radius
                - cb.radius;
            best = best.min(d);
        }
    }
    best
}

/// Measure one sequence; `annotated` controls whether it contributes to the
/// contact ratio.
pub fn measure_sequence(
    pair: &InteractionPair,
    skeleton: &SkeletonSpec,
    body: &BodyVolume,
    params: &PhysicsParams,
    annotated: bool,
) -> Result<SequencePhysics> {
    let frames = pair_capsules(pair, skeleton, body)?;
    let n = frames.len();
    let mut total_overlap = 0usize;
    let mut max_overlap = 0usize;
    let mut penetrating = 0usize;
    let mut dilated_contact = false;
    // A voxel center kept by either body lies within one voxel diagonal of
    // the capsule surface; dilation extends reach by `dilation` voxels per
    // body. Frames with a larger surface gap cannot overlap even dilated.
    let diag = params.resolution * 3f64.sqrt();
    let dilated_margin = 2.0 * (params.dilation_voxels as f64 * params.resolution + diag);
    for (caps_a, caps_b) in &frames {
        let gap = min_surface_gap(caps_a, caps_b);
        if gap > dilated_margin {
            continue;
        }
        let grid_a = VoxelGrid::voxelize(caps_a, params.resolution);
        let grid_b = VoxelGrid::voxelize(caps_b, params.resolution);
        let overlap = if gap > 0.0 { 0 } else { grid_a.overlap(&grid_b)? };
        total_overlap += overlap;
        max_overlap = max_overlap.max(overlap);
        if overlap > 0 {
            penetrating += 1;
        }
        if !dilated_contact {
            let da = grid_a.dilate(params.dilation_voxels);
            let db = grid_b.dilate(params.dilation_voxels);
            if da.overlap(&db)? > 0 {
                dilated_contact = true;
            }
        }
    }
    let severe = max_overlap > params.severe_threshold_voxels;
    Ok(SequencePhysics {
        frames: n,
        mean_overlap: total_overlap as f64 / n as f64,
        max_overlap,
        penetrating_frames: penetrating,
        dilated_contact,
        severe,
        valid_contact: dilated_contact && !severe,
        annotated,
    })
}

/// PV / PFR / PDR plus the contact ratio over annotated sequences.
///
/// `annotate_all` treats every sequence as contact-annotated, which is how
/// generated batches are evaluated when ground-truth annotations do not
/// exist.
pub fn penetration_metrics(
    pairs: &[InteractionPair],
    skeleton: &SkeletonSpec,
    body: &BodyVolume,
    params: &PhysicsParams,
    annotate_all: bool,
) -> Result<PenetrationReport> {
    if pairs.is_empty() {
        return Err(DuetError::InsufficientSamples { needed: 1, got: 0 });
    }
    let per_sequence: Vec<SequencePhysics> = pairs
        .iter()
        .map(|p| {
            measure_sequence(
                p,
                skeleton,
                body,
                params,
                annotate_all || p.contact_annotated,
            )
        })
        .collect::<Result<_>>()?;
    let m = per_sequence.len() as f64;
    let pv = per_sequence.iter().map(|s| s.mean_overlap).sum::<f64>() / m;
    let total_frames: usize = per_sequence.iter().map(|s| s.frames).sum();
    let pv_pooled = per_sequence
        .iter()
        .map(|s| s.mean_overlap * s.frames as f64)
        .sum::<f64>()
        / total_frames as f64;
    let pfr = per_sequence
        .iter()
        .filter(|s| s.penetrating_frames > 0)
        .count() as f64
        / m;
    let pdr = per_sequence
        .iter()
        .map(|s| s.penetrating_frames as f64 / s.frames as f64)
        .sum::<f64>()
        / m;
    let annotated_count = per_sequence.iter().filter(|s| s.annotated).count();
    let contact_ratio = if annotated_count == 0 {
        None
    } else {
        Some(
            per_sequence
                .iter()
                .filter(|s| s.annotated && s.valid_contact)
                .count() as f64
                / annotated_count as f64,
        )
    };
    Ok(PenetrationReport {
        pv,
        pv_pooled,
        pfr,
        pdr,
        contact_ratio,
        annotated_count,
        sequence_count: per_sequence.len(),
        params: *params,
        per_sequence,
    })
}

/// Contact ratio over annotated sequences; errors when none are annotated.
pub fn contact_ratio(
    pairs: &[InteractionPair],
    skeleton: &SkeletonSpec,
    body: &BodyVolume,
    params: &PhysicsParams,
) -> Result<f64> {
    let annotated: Vec<&InteractionPair> =
        pairs.iter().filter(|p| p.contact_annotated).collect();
    if annotated.is_empty() {
        return Err(DuetError::InsufficientSamples {
            needed: 1,
            got: 0,
        });
    }
    let mut valid = 0usize;
    for pair in &annotated {
        let s = measure_sequence(pair, skeleton, body, params, true)?;
        if s.valid_contact {
            valid += 1;
        }
    }
    Ok(valid as f64 / annotated.len() as f64)
}

/// Independent overlap oracle: exhaustively scan the intersection of the two
/// bodies' bounding boxes and test each voxel center against both capsule
/// sets directly. Shares no code with `voxelize`/`overlap`.
pub fn brute_force_overlap_oracle(
    caps_a: &[WorldCapsule],
    caps_b: &[WorldCapsule],
    resolution: f64,
) -> usize {
    let bounds = |caps: &[WorldCapsule]| -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        if caps.is_empty() {
            return None;
        }
        for c in caps {
            lo = lo.inf(&c.p0.inf(&c.p1).map(|v| v - c.radius));
            hi = hi.sup(&c.p0.sup(&c.p1).map(|v| v + c.radius));
        }
        Some((lo, hi))
    };
    let (Some((lo_a, hi_a)), Some((lo_b, hi_b))) = (bounds(caps_a), bounds(caps_b)) else {
        return 0;
    };
    let lo = lo_a.sup(&lo_b);
    let hi = hi_a.inf(&hi_b);
    if lo.x > hi.x || lo.y > hi.y || lo.z > hi.z {
        return 0;
    }
    let span = |l: f64, h: f64| -> std::ops::RangeInclusive<i64> {
        let start = ((l / resolution) - 0.5).floor() as i64 - 1;
        let end = ((h / resolution) - 0.5).ceil() as i64 + 1;
        start..=end
    };
    let inside = |caps: &[WorldCapsule], p: &Vector3<f64>| {
        caps.iter()
            .any(|c| point_segment_distance(p, &c.p0, &c.p1) <= c.radius)
    };
    let mut count = 0usize;
    for i in span(lo.x, hi.x) {
        for j in span(lo.y, hi.y) {
            for k in span(lo.z, hi.z) {
                let p = Vector3::new(
                    (i as f64 + 0.5) * resolution,
                    (j as f64 + 0.5) * resolution,
                    (k as f64 + 0.5) * resolution,
                );
                if inside(caps_a, &p) && inside(caps_b, &p) {
                    count += 1;
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::sequence::{MotionLayout, MotionSequence};

    /// Build a pair whose persons are single spheres at given centers per
    /// frame (via a 2-joint skeleton and position layout).
    fn sphere_pair(
        centers_a: &[[f64; 3]],
        centers_b: &[[f64; 3]],
    ) -> (InteractionPair, SkeletonSpec, BodyVolume) {
        let skel = SkeletonSpec::chain(&[[0.0; 3], [0.0, 0.0, 0.0]]);
        let layout = MotionLayout::pos_vel_rot(2);
        let n = centers_a.len();
        let build = |centers: &[[f64; 3]]| {
            let mut seq = MotionSequence::zeros(layout, n);
            for (t, c) in centers.iter().enumerate() {
                let frame = seq.frame_mut(t);
                for k in 0..3 {
                    frame[k] = c[k] as f32;
                    frame[3 + k] = c[k] as f32;
                }
            }
            seq
        };
        let pair = InteractionPair::new(
            build(centers_a),
            build(centers_b),
            "test".into(),
            true,
        )
        .unwrap();
        let body = BodyVolume::new(vec![crate::physics::body::Capsule {
            joint_a: 0,
            joint_b: 1,
            radius: 0.06,
        }])
        .unwrap();
        (pair, skel, body)
    }

    #[test]
    fn separated_bodies_are_all_zero() {
        let a = vec![[0.0, 0.0, 0.0]; 4];
        let b = vec![[2.0, 0.0, 0.0]; 4];
        let (pair, skel, body) = sphere_pair(&a, &b);
        let report =
            penetration_metrics(&[pair], &skel, &body, &PhysicsParams::default(), false).unwrap();
        assert_eq!(report.pv, 0.0);
        assert_eq!(report.pfr, 0.0);
        assert_eq!(report.pdr, 0.0);
        assert_eq!(report.contact_ratio, Some(0.0));
    }

    #[test]
    fn pfr_pdr_definition_arithmetic() {
        // Sequence 1 overlaps in 5 of 10 frames; sequence 2 is clean.
        let mut a1 = vec![[0.0, 0.0, 0.0]; 10];
        let b1 = vec![[0.08, 0.0, 0.0]; 10];
        for frame in a1.iter_mut().take(5) {
            frame[0] = 0.0;
        }
        for frame in a1.iter_mut().skip(5) {
            frame[0] = -1.0; // far away
        }
        let (pair1, skel, body) = sphere_pair(&a1, &b1);
        let a2 = vec![[0.0, 0.0, 0.0]; 10];
        let b2 = vec![[3.0, 0.0, 0.0]; 10];
        let (pair2, _, _) = sphere_pair(&a2, &b2);
        let report = penetration_metrics(
            &[pair1, pair2],
            &skel,
            &body,
            &PhysicsParams::default(),
            false,
        )
        .unwrap();
        assert_eq!(report.pfr, 0.5);
        assert_eq!(report.pdr, 0.25);
        assert!(report.pv > 0.0);
    }

    #[test]
    fn grazing_counts_as_contact_after_dilation() {
        // Surfaces 2 cm apart: no raw overlap, dilated shells meet.
        let a = vec![[0.0, 0.0, 0.0]; 3];
        let b = vec![[0.14, 0.0, 0.0]; 3];
        let (pair, skel, body) = sphere_pair(&a, &b);
        let s = measure_sequence(&pair, &skel, &body, &PhysicsParams::default(), true).unwrap();
        assert_eq!(s.max_overlap, 0);
        assert!(s.dilated_contact);
        assert!(s.valid_contact);
    }

    #[test]
    fn deep_interpenetration_is_excluded() {
        // Same center: overlap equals the whole sphere, far beyond 27 voxels.
        let a = vec![[0.0, 0.0, 0.0]; 3];
        let b = vec![[0.01, 0.0, 0.0]; 3];
        let (pair, skel, body) = sphere_pair(&a, &b);
        let s = measure_sequence(&pair, &skel, &body, &PhysicsParams::default(), true).unwrap();
        assert!(s.max_overlap > 27, "overlap {}", s.max_overlap);
        assert!(s.severe);
        assert!(!s.valid_contact);
        assert!(s.dilated_contact);
    }

    #[test]
    fn contact_ratio_requires_annotations() {
        let a = vec![[0.0, 0.0, 0.0]; 2];
        let b = vec![[3.0, 0.0, 0.0]; 2];
        let (mut pair, skel, body) = sphere_pair(&a, &b);
        pair.contact_annotated = false;
        assert!(matches!(
            contact_ratio(&[pair], &skel, &body, &PhysicsParams::default()),
            Err(DuetError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn oracle_agrees_on_simple_spheres() {
        let caps_a = vec![WorldCapsule {
            p0: Vector3::new(0.0, 0.0, 0.0),
            p1: Vector3::new(0.0, 0.0, 0.0),
            radius: 0.05,
        }];
        let caps_b = vec![WorldCapsule {
            p0: Vector3::new(0.04, 0.01, -0.02),
            p1: Vector3::new(0.04, 0.01, -0.02),
            radius: 0.05,
        }];
        let res = 0.02;
        let fast = VoxelGrid::voxelize(&caps_a, res)
            .overlap(&VoxelGrid::voxelize(&caps_b, res))
            .unwrap();
        let slow = brute_force_overlap_oracle(&caps_a, &caps_b, res);
        assert_eq!(fast, slow);
        assert!(fast > 0);
        assert_eq!(brute_force_overlap_oracle(&[], &caps_b, res), 0);
    }
}
