//! Voxel overlap against the exhaustive lattice-scan oracle, plus metric
//! invariances that depend on the shared lattice.

use duet_core::physics::{
    brute_force_overlap_oracle, min_surface_gap, segment_segment_distance, VoxelGrid,
    WorldCapsule,
};
use duet_core::rng::{rng_from_seed, DuetRng};
use nalgebra::Vector3;
use rand::Rng;

fn random_capsules(rng: &mut DuetRng, count: usize, spread: f64) -> Vec<WorldCapsule> {
    (0..count)
        .map(|_| {
            let center = Vector3::new(
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
            );
            let half = Vector3::new(
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
            );
            WorldCapsule {
                p0: center - half,
                p1: center + half,
                radius: rng.gen_range(0.02..0.12),
            }
        })
        .collect()
}

#[test]
fn fuzz_oracle_equivalence_100_cases() {
    let mut rng = rng_from_seed(61);
    let res = 0.02;
    let mut nonzero = 0usize;
    for case in 0..100 {
        let n_a = rng.gen_range(1..4);
        let n_b = rng.gen_range(1..4);
        let caps_a = random_capsules(&mut rng, n_a, 0.12);
        let caps_b = random_capsules(&mut rng, n_b, 0.12);
        let fast = VoxelGrid::voxelize(&caps_a, res)
            .overlap(&VoxelGrid::voxelize(&caps_b, res))
            .unwrap();
        let slow = brute_force_overlap_oracle(&caps_a, &caps_b, res);
        assert_eq!(fast, slow, "case {case}");
        if fast > 0 {
            nonzero += 1;
        }
    }
    // The configuration spread keeps a healthy mix of hits and misses.
    assert!(nonzero > 20, "only {nonzero} overlapping cases");
}

#[test]
fn joint_pitch_translation_leaves_metrics_unchanged() {
    let mut rng = rng_from_seed(62);
    let res = 0.02;
    let caps_a = random_capsules(&mut rng, 3, 0.1);
    let caps_b = random_capsules(&mut rng, 3, 0.1);
    let base = VoxelGrid::voxelize(&caps_a, res)
        .overlap(&VoxelGrid::voxelize(&caps_b, res))
        .unwrap();
    let shift = Vector3::new(5.0 * res, -3.0 * res, 11.0 * res);
    let moved = |caps: &[WorldCapsule]| -> Vec<WorldCapsule> {
        caps.iter()
            .map(|c| WorldCapsule {
                p0: c.p0 + shift,
                p1: c.p1 + shift,
                radius: c.radius,
            })
            .collect()
    };
    let shifted = VoxelGrid::voxelize(&moved(&caps_a), res)
        .overlap(&VoxelGrid::voxelize(&moved(&caps_b), res))
        .unwrap();
    assert_eq!(base, shifted);
}

#[test]
fn dilation_never_decreases_overlap() {
    let mut rng = rng_from_seed(63);
    let res = 0.02;
    for _ in 0..20 {
        let caps_a = random_capsules(&mut rng, 2, 0.08);
        let caps_b = random_capsules(&mut rng, 2, 0.08);
        let ga = VoxelGrid::voxelize(&caps_a, res);
        let gb = VoxelGrid::voxelize(&caps_b, res);
        let raw = ga.overlap(&gb).unwrap();
        let dilated = ga.dilate(1).overlap(&gb.dilate(1)).unwrap();
        assert!(dilated >= raw);
    }
}

#[test]
fn surface_gap_prefilter_is_sound() {
    // Whenever the prefilter reports a positive gap, the voxel overlap must
    // be zero (the converse need not hold at voxel resolution).
    let mut rng = rng_from_seed(64);
    let res = 0.02;
    for _ in 0..100 {
        let caps_a = random_capsules(&mut rng, 2, 0.15);
        let caps_b = random_capsules(&mut rng, 2, 0.15);
        let gap = min_surface_gap(&caps_a, &caps_b);
        let overlap = VoxelGrid::voxelize(&caps_a, res)
            .overlap(&VoxelGrid::voxelize(&caps_b, res))
            .unwrap();
        if gap > 0.0 {
            assert_eq!(overlap, 0, "gap {gap} but overlap {overlap}");
        }
    }
}

#[test]
fn segment_distance_matches_sampled_minimum() {
    let mut rng = rng_from_seed(65);
    for _ in 0..50 {
        let p = |rng: &mut DuetRng| {
            Vector3::new(
                rng.gen_range(-1.0..1.0f64),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        };
        let (p1, q1, p2, q2) = (p(&mut rng), p(&mut rng), p(&mut rng), p(&mut rng));
        let fast = segment_segment_distance(&p1, &q1, &p2, &q2);
        // Dense parameter sampling as the oracle.
        let mut slow = f64::INFINITY;
        let steps = 200;
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            let a = p1 + (q1 - p1) * s;
            for j in 0..=steps {
                let t = j as f64 / steps as f64;
                let b = p2 + (q2 - p2) * t;
                slow = slow.min((a - b).norm());
            }
        }
        assert!(
            fast <= slow + 1e-9 && fast >= slow - 2e-4,
            "fast {fast} vs sampled {slow}"
        );
    }
}
