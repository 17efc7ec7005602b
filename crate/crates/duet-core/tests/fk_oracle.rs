//! Kinematics against an independent homogeneous-transform oracle, plus
//! rotation round-trip and rigid-equivariance properties.

use duet_core::motion::kinematics::forward_kinematics;
use duet_core::motion::rotation::{matrix_to_rot6d, rot6d_to_matrix, Rotation6D};
use duet_core::motion::skeleton::SkeletonSpec;
use duet_core::rng::rng_from_seed;
use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3, Vector4};
use proptest::prelude::*;
use rand::Rng;

/// Dense 4x4 homogeneous-transform chain, written independently of the
/// production kinematics (explicit matrix products, no incremental state).
fn fk_homogeneous_oracle(
    skeleton: &SkeletonSpec,
    root_translation: Vector3<f64>,
    rotations: &[Matrix3<f64>],
) -> Vec<Vector3<f64>> {
    let local_transform = |j: usize| -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotations[j]);
        let offset = if skeleton.parent_index[j] < 0 {
            root_translation
        } else {
            skeleton.offset(j)
        };
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&offset);
        m
    };
    // Global transform of joint j = product of local transforms along the
    // ancestor path, recomputed from scratch per joint.
    (0..skeleton.joint_count())
        .map(|j| {
            let mut path = vec![j];
            let mut cur = j;
            while skeleton.parent_index[cur] >= 0 {
                cur = skeleton.parent_index[cur] as usize;
                path.push(cur);
            }
            path.reverse();
            let mut m = Matrix4::identity();
            for node in path {
                m *= local_transform(node);
            }
            let h = m * Vector4::new(0.0, 0.0, 0.0, 1.0);
            Vector3::new(h.x, h.y, h.z)
        })
        .collect()
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0f64),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 { Vector3::x() } else { axis };
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

#[test]
fn random_chain_matches_homogeneous_oracle() {
    let mut rng = rng_from_seed(101);
    for case in 0..20 {
        let offsets: Vec<[f64; 3]> = (0..5)
            .map(|j| {
                if j == 0 {
                    [0.0; 3]
                } else {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                }
            })
            .collect();
        let skel = SkeletonSpec::chain(&offsets);
        let mats: Vec<Matrix3<f64>> = (0..5).map(|_| random_rotation(&mut rng)).collect();
        let rots: Vec<Rotation6D> = mats.iter().map(|m| matrix_to_rot6d(m).unwrap()).collect();
        let root = Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let got = forward_kinematics(&skel, root, &rots).unwrap();
        let want = fk_homogeneous_oracle(&skel, root, &mats);
        for (j, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(
                (g - w).norm() < 1e-6,
                "case {case} joint {j}: {g:?} vs {w:?}"
            );
        }
    }
}

#[test]
fn branched_toy_skeleton_matches_oracle() {
    let mut rng = rng_from_seed(102);
    let skel = SkeletonSpec::toy_eight_joint();
    for _ in 0..10 {
        let mats: Vec<Matrix3<f64>> = (0..8).map(|_| random_rotation(&mut rng)).collect();
        let rots: Vec<Rotation6D> = mats.iter().map(|m| matrix_to_rot6d(m).unwrap()).collect();
        let root = Vector3::new(rng.gen_range(-1.0..1.0), 0.9, rng.gen_range(-1.0..1.0));
        let got = forward_kinematics(&skel, root, &rots).unwrap();
        let want = fk_homogeneous_oracle(&skel, root, &mats);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-9);
        }
    }
}

#[test]
fn translation_equivariance_is_exact() {
    let mut rng = rng_from_seed(103);
    let skel = SkeletonSpec::toy_eight_joint();
    let mats: Vec<Matrix3<f64>> = (0..8).map(|_| random_rotation(&mut rng)).collect();
    let rots: Vec<Rotation6D> = mats.iter().map(|m| matrix_to_rot6d(m).unwrap()).collect();
    let base = forward_kinematics(&skel, Vector3::zeros(), &rots).unwrap();
    let shift = Vector3::new(1.25, -0.5, 3.0);
    let moved = forward_kinematics(&skel, shift, &rots).unwrap();
    // The root is exact; children accumulate the shift through sums, so they
    // agree to the last couple of ulps.
    assert_eq!(base[0] + shift, moved[0]);
    for (b, m) in base.iter().zip(&moved) {
        assert!((b + shift - m).norm() < 1e-12);
    }
}

#[test]
fn root_rotation_equivariance() {
    let mut rng = rng_from_seed(104);
    let skel = SkeletonSpec::toy_eight_joint();
    let mats: Vec<Matrix3<f64>> = (0..8).map(|_| random_rotation(&mut rng)).collect();
    let pre = random_rotation(&mut rng);
    let rots: Vec<Rotation6D> = mats.iter().map(|m| matrix_to_rot6d(m).unwrap()).collect();
    let mut pre_rots = rots.clone();
    pre_rots[0] = matrix_to_rot6d(&(pre * mats[0])).unwrap();
    let base = forward_kinematics(&skel, Vector3::zeros(), &rots).unwrap();
    let rotated = forward_kinematics(&skel, Vector3::zeros(), &pre_rots).unwrap();
    for (b, r) in base.iter().zip(&rotated) {
        assert!((pre * b - r).norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rot6d_round_trip(
        ax in -1.0f64..1.0,
        ay in -1.0f64..1.0,
        az in -1.0f64..1.0,
        angle in -3.1f64..3.1,
    ) {
        let axis = Vector3::new(ax, ay, az);
        prop_assume!(axis.norm() > 1e-3);
        let m = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner();
        let r = matrix_to_rot6d(&m).unwrap();
        let back = rot6d_to_matrix(&r).unwrap();
        prop_assert!((m - back).norm() < 1e-6);
    }

    #[test]
    fn decoded_rotations_are_orthonormal(
        v in prop::array::uniform6(-2.0f64..2.0),
    ) {
        let r = Rotation6D::new(v);
        if let Ok(m) = rot6d_to_matrix(&r) {
            let gram = m.transpose() * m - Matrix3::identity();
            prop_assert!(gram.norm() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }
    }
}
