//! Synthetic two-person interaction generator.
//!
//! Clips come from four parameterized families:
//!
//! * `approach`    - walk toward each other, stop out of reach (no contact)
//! * `circle`      - orbit each other with a close pass (no contact; the
//!   ground-truth gap narrows to a few centimeters at mid-clip)
//! * `reach_touch` - reach out and touch right wrists (contact)
//! * `push_retreat`- one pushes the other's chest, the other steps back
//!   (contact)
//!
//! Families cycle round-robin over the clip index so the contact fraction of
//! any dataset stays at one half. Per-clip parameters (speeds, heights,
//! phases, global placement) are drawn from a splittable stream seeded with
//! `seed ^ clip_index`, making the generator a pure function of its
//! arguments. Motions are built as joint-angle tracks and run through forward
//! kinematics, so stored positions, velocities (finite differences at 20
//! fps) and rotation channels are mutually consistent in either layout.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;

use crate::error::{DuetError, Result};
use crate::motion::kinematics::forward_kinematics;
use crate::motion::rotation::{matrix_to_rot6d, shortest_arc, yaw_matrix, Rotation6D};
use crate::motion::sequence::{InteractionPair, LayoutKind, MotionLayout, MotionSequence};
use crate::motion::skeleton::SkeletonSpec;
use crate::rng::{rng_for_clip, DuetRng};

pub const SYNTH_FPS: f64 = 20.0;

const ARM_LEN: f64 = 0.5;
const SHOULDER_LATERAL: f64 = 0.2;
const SHOULDER_HEIGHT_ABOVE_ROOT: f64 = 0.54; // spine 0.32 + shoulder 0.22

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Approach,
    Circle,
    ReachTouch,
    PushRetreat,
}

pub const FAMILIES: [Family; 4] = [
    Family::Approach,
    Family::Circle,
    Family::ReachTouch,
    Family::PushRetreat,
];

impl Family {
    pub fn expects_contact(&self) -> bool {
        matches!(self, Family::ReachTouch | Family::PushRetreat)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Family::Approach => "approach",
            Family::Circle => "circle",
            Family::ReachTouch => "reach_touch",
            Family::PushRetreat => "push_retreat",
        }
    }

    pub fn text_templates(&self) -> &'static [&'static str] {
        match self {
            Family::Approach => &[
                "two people walk toward each other and stop",
                "both persons approach one another slowly",
                "two people walk toward each other face to face",
            ],
            Family::Circle => &[
                "two people circle around each other",
                "both persons circle one another warily",
                "two people circle each other closely",
            ],
            Family::ReachTouch => &[
                "two people reach out and touch right hands",
                "both persons reach forward to touch hands",
                "two people reach out and touch hands gently",
            ],
            Family::PushRetreat => &[
                "one person pushes the other who steps back",
                "one person pushes the other away",
                "a person pushes their partner who retreats",
            ],
        }
    }

    /// Family of a text label, by the keyword each template family carries.
    pub fn of_text(text: &str) -> Option<Family> {
        let t = text.to_lowercase();
        if t.contains("circle") {
            Some(Family::Circle)
        } else if t.contains("push") {
            Some(Family::PushRetreat)
        } else if t.contains("touch") || t.contains("reach") {
            Some(Family::ReachTouch)
        } else if t.contains("toward") || t.contains("approach") {
            Some(Family::Approach)
        } else {
            None
        }
    }
}

/// One person's pose track: root translation plus local joint rotations per
/// frame.
struct PoseTrack {
    root: Vec<Vector3<f64>>,
    rotations: Vec<Vec<Rotation6D>>,
    stepping: bool,
    step_phase: Vec<f64>,
}

struct Joints {
    l_shoulder: usize,
    r_shoulder: usize,
}

fn find_joints(skeleton: &SkeletonSpec) -> Result<Joints> {
    let find = |name: &str| {
        skeleton
            .joint_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                DuetError::InvalidConfig(format!("generator needs a joint named '{name}'"))
            })
    };
    // Wrists and spine are implied by the arm/torso geometry; require them by
    // name so a foreign skeleton fails up front.
    for name in ["l_wrist", "r_wrist", "spine"] {
        find(name)?;
    }
    Ok(Joints {
        l_shoulder: find("l_shoulder")?,
        r_shoulder: find("r_shoulder")?,
    })
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Interpolate between two rotations along the geodesic.
fn slerp(a: &Matrix3<f64>, b: &Matrix3<f64>, t: f64) -> Matrix3<f64> {
    let qa = UnitQuaternion::from_matrix(a);
    let qb = UnitQuaternion::from_matrix(b);
    qa.slerp(&qb, t).to_rotation_matrix().into_inner()
}

/// Local shoulder rotation that hangs the arm roughly straight down.
fn hang_rotation(left: bool) -> Matrix3<f64> {
    let rest = if left { Vector3::x() } else { -Vector3::x() };
    let down = Vector3::new(if left { 0.12 } else { -0.12 }, -1.0, 0.05).normalize();
    shortest_arc(&rest, &down)
}

/// Local shoulder rotation putting the wrist at `target` (world), given the
/// person's root pose. The wrist lands on the reach sphere along the target
/// direction, so targets at exactly arm's length are hit exactly.
fn reach_rotation(
    root_pos: &Vector3<f64>,
    yaw: f64,
    left: bool,
    target: &Vector3<f64>,
) -> Matrix3<f64> {
    let parent_rot = yaw_matrix(yaw); // spine keeps the root orientation
    let lateral = if left { SHOULDER_LATERAL } else { -SHOULDER_LATERAL };
    let shoulder =
        root_pos + parent_rot * Vector3::new(lateral, SHOULDER_HEIGHT_ABOVE_ROOT, 0.0);
    let dir_world = (target - shoulder).normalize();
    let rest = if left { Vector3::x() } else { -Vector3::x() };
    let desired_global = shortest_arc(&(parent_rot * rest), &dir_world) * parent_rot;
    parent_rot.transpose() * desired_global
}

struct PoseParams {
    height: f64,
    bob_amp: f64,
    bob_freq: f64,
}

/// Assemble local rotations for a frame from root yaw + arm rotations.
fn frame_rotations(
    skeleton: &SkeletonSpec,
    joints: &Joints,
    yaw: f64,
    left_arm: &Matrix3<f64>,
    right_arm: &Matrix3<f64>,
) -> Vec<Rotation6D> {
    let mut rots = vec![Rotation6D::IDENTITY; skeleton.joint_count()];
    rots[0] = matrix_to_rot6d(&yaw_matrix(yaw)).expect("yaw is a rotation");
    rots[joints.l_shoulder] = matrix_to_rot6d(left_arm).expect("left arm rotation");
    rots[joints.r_shoulder] = matrix_to_rot6d(right_arm).expect("right arm rotation");
    rots
}

struct FamilyTracks {
    a: PoseTrack,
    b: PoseTrack,
}

fn gen_family_tracks(
    family: Family,
    rng: &mut DuetRng,
    frames: usize,
    skeleton: &SkeletonSpec,
    joints: &Joints,
) -> FamilyTracks {
    let n = frames;
    let params_a = PoseParams {
        height: rng.gen_range(0.90..0.98),
        bob_amp: rng.gen_range(0.010..0.022),
        bob_freq: rng.gen_range(1.4..1.9),
    };
    let params_b = PoseParams {
        height: rng.gen_range(0.90..0.98),
        bob_amp: rng.gen_range(0.010..0.022),
        bob_freq: rng.gen_range(1.4..1.9),
    };
    let phase_a = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase_b = rng.gen_range(0.0..std::f64::consts::TAU);

    let mut root_a = Vec::with_capacity(n);
    let mut root_b = Vec::with_capacity(n);
    let mut yaw_a = Vec::with_capacity(n);
    let mut yaw_b = Vec::with_capacity(n);
    let mut arms_a: Vec<(Matrix3<f64>, Matrix3<f64>)> = Vec::with_capacity(n);
    let mut arms_b: Vec<(Matrix3<f64>, Matrix3<f64>)> = Vec::with_capacity(n);
    let hang_l = hang_rotation(true);
    let hang_r = hang_rotation(false);
    let mut stepping = false;

    let time = |t: usize| t as f64 / SYNTH_FPS;
    let bob = |p: &PoseParams, t: usize, phase: f64| {
        p.height + p.bob_amp * (std::f64::consts::TAU * p.bob_freq * time(t) + phase).sin()
    };
    let face = |from: &Vector3<f64>, to: &Vector3<f64>| {
        let d = to - from;
        d.x.atan2(d.z)
    };

    match family {
        Family::Approach => {
            stepping = true;
            let d0 = rng.gen_range(2.0..2.4);
            let d1 = rng.gen_range(0.9..1.15);
            let swing = rng.gen_range(0.18..0.30);
            for t in 0..n {
                let u = smoothstep(t as f64 / (n - 1).max(1) as f64);
                let d = d0 + (d1 - d0) * u;
                let pa = Vector3::new(0.0, bob(&params_a, t, phase_a), -d / 2.0);
                let pb = Vector3::new(0.0, bob(&params_b, t, phase_b), d / 2.0);
                yaw_a.push(face(&pa, &pb));
                yaw_b.push(face(&pb, &pa));
                root_a.push(pa);
                root_b.push(pb);
                // Counter-phase arm swing while walking.
                let sw = |phase: f64, side: f64| {
                    let ang =
                        swing * (std::f64::consts::TAU * params_a.bob_freq * time(t) + phase).sin();
                    let pitch = nalgebra::Rotation3::from_axis_angle(
                        &nalgebra::Unit::new_normalize(Vector3::x()),
                        ang * side,
                    )
                    .into_inner();
                    pitch
                };
                arms_a.push((sw(phase_a, 1.0) * hang_l, sw(phase_a, -1.0) * hang_r));
                arms_b.push((sw(phase_b, 1.0) * hang_l, sw(phase_b, -1.0) * hang_r));
            }
        }
        Family::Circle => {
            // Elliptical orbit: the center distance narrows from d0 to
            // d0 - d1 at mid-clip, putting the torso gap at a few cm without
            // ever closing it (torso radius 0.12 each).
            let d0 = rng.gen_range(0.60..0.66);
            let d1 = rng.gen_range(0.30..0.34);
            let turns = rng.gen_range(0.5..0.9) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let phi0 = rng.gen_range(0.0..std::f64::consts::TAU);
            for t in 0..n {
                let u = t as f64 / (n - 1).max(1) as f64;
                let phi = phi0 + turns * std::f64::consts::TAU * u;
                let d = d0 - d1 * (std::f64::consts::PI * u).sin().powi(2);
                let radial = Vector3::new(phi.cos(), 0.0, phi.sin());
                let mut pa = radial * (d / 2.0);
                let mut pb = -radial * (d / 2.0);
                pa.y = bob(&params_a, t, phase_a);
                pb.y = bob(&params_b, t, phase_b);
                yaw_a.push(face(&pa, &pb));
                yaw_b.push(face(&pb, &pa));
                root_a.push(pa);
                root_b.push(pb);
                arms_a.push((hang_l, hang_r));
                arms_b.push((hang_l, hang_r));
            }
        }
        Family::ReachTouch => {
            // Root separation chosen so both right wrists exactly reach the
            // meeting point: shoulders sit SHOULDER_LATERAL off axis, so
            // d/2 = sqrt(ARM_LEN^2 - SHOULDER_LATERAL^2).
            let d = 2.0 * (ARM_LEN * ARM_LEN - SHOULDER_LATERAL * SHOULDER_LATERAL).sqrt();
            // Wrist gap at the hold: close enough that the 4 cm wrist
            // capsules overlap, shallow enough to stay far below the severe
            // cutoff.
            let eps_min = rng.gen_range(0.030..0.042);
            let reach_in = (0.25, 0.45);
            let reach_out = (0.60, 0.80);
            for t in 0..n {
                let u = t as f64 / (n - 1).max(1) as f64;
                let pa = Vector3::new(0.0, bob(&params_a, t, phase_a), -d / 2.0);
                let pb = Vector3::new(0.0, bob(&params_b, t, phase_b), d / 2.0);
                let ya = face(&pa, &pb);
                let yb = face(&pb, &pa);
                let blend = smoothstep((u - reach_in.0) / (reach_in.1 - reach_in.0))
                    * (1.0 - smoothstep((u - reach_out.0) / (reach_out.1 - reach_out.0)));
                // Shared meeting point at shoulder height, split by eps along x.
                let h = (pa.y + pb.y) / 2.0 + SHOULDER_HEIGHT_ABOVE_ROOT;
                let eps = eps_min + (1.0 - blend) * 0.25;
                let target_a = Vector3::new(-eps / 2.0, h, 0.0);
                let target_b = Vector3::new(eps / 2.0, h, 0.0);
                let reach_a = reach_rotation(&pa, ya, false, &target_a);
                let reach_b = reach_rotation(&pb, yb, false, &target_b);
                arms_a.push((hang_l, slerp(&hang_r, &reach_a, blend)));
                arms_b.push((hang_l, slerp(&hang_r, &reach_b, blend)));
                yaw_a.push(ya);
                yaw_b.push(yb);
                root_a.push(pa);
                root_b.push(pb);
            }
        }
        Family::PushRetreat => {
            // Palm targets sit 2.5 cm inside the partner's 12 cm torso
            // capsule, laterally split so both wrists land on the chest. The
            // start distance is chosen so those targets sit exactly at arm's
            // length.
            let lateral = 0.08f64;
            // Push height referenced to the pusher so the target stays at
            // exactly arm's length regardless of bob; 0.28 above the root
            // keeps it on the partner's torso segment (0..0.32).
            let chest_height = 0.28;
            let axis_dist: f64 = 0.12 + 0.04 - 0.025; // torso + wrist radius - depth
            let chest_z_off = (axis_dist * axis_dist - lateral * lateral).sqrt();
            let dx = SHOULDER_LATERAL - lateral;
            let dy = SHOULDER_HEIGHT_ABOVE_ROOT - chest_height;
            let reach_z = (ARM_LEN * ARM_LEN - dx * dx - dy * dy).sqrt();
            let d0 = reach_z + chest_z_off;
            let retreat = rng.gen_range(0.45..0.65);
            let push_in = (0.25, 0.45);
            let hold_end = 0.60;
            for t in 0..n {
                let u = t as f64 / (n - 1).max(1) as f64;
                let zb = d0 / 2.0 + retreat * smoothstep((u - hold_end) / (1.0 - hold_end));
                let pa = Vector3::new(0.0, bob(&params_a, t, phase_a), -d0 / 2.0);
                let pb = Vector3::new(0.0, bob(&params_b, t, phase_b), zb);
                let ya = face(&pa, &pb);
                let yb = face(&pb, &pa);
                let blend = smoothstep((u - push_in.0) / (push_in.1 - push_in.0))
                    * (1.0 - smoothstep((u - hold_end) / 0.15));
                let chest = Vector3::new(0.0, pa.y + chest_height, zb - chest_z_off);
                let target_l = chest + Vector3::new(lateral, 0.0, 0.0);
                let target_r = chest + Vector3::new(-lateral, 0.0, 0.0);
                let push_l = reach_rotation(&pa, ya, true, &target_l);
                let push_r = reach_rotation(&pa, ya, false, &target_r);
                arms_a.push((
                    slerp(&hang_l, &push_l, blend),
                    slerp(&hang_r, &push_r, blend),
                ));
                arms_b.push((hang_l, hang_r));
                yaw_a.push(ya);
                yaw_b.push(yb);
                root_a.push(pa);
                root_b.push(pb);
            }
        }
    }

    // Shared global placement: yaw plus ground offset.
    let g_yaw = rng.gen_range(0.0..std::f64::consts::TAU);
    let g_rot = yaw_matrix(g_yaw);
    let off = Vector3::new(rng.gen_range(-0.5..0.5), 0.0, rng.gen_range(-0.5..0.5));

    let build = |root: Vec<Vector3<f64>>,
                 yaw: Vec<f64>,
                 arms: Vec<(Matrix3<f64>, Matrix3<f64>)>,
                 phase: f64,
                 params: &PoseParams|
     -> PoseTrack {
        let mut rotations = Vec::with_capacity(n);
        let mut roots = Vec::with_capacity(n);
        let mut phases = Vec::with_capacity(n);
        for t in 0..n {
            // Global yaw folds into the root rotation additively (same axis);
            // arm rotations are local and unaffected by the rigid placement.
            let rots =
                frame_rotations(skeleton, joints, yaw[t] + g_yaw, &arms[t].0, &arms[t].1);
            roots.push(g_rot * root[t] + off);
            rotations.push(rots);
            phases.push(std::f64::consts::TAU * params.bob_freq * time(t) + phase);
        }
        PoseTrack {
            root: roots,
            rotations,
            stepping,
            step_phase: phases,
        }
    };

    FamilyTracks {
        a: build(root_a, yaw_a, arms_a, phase_a, &params_a),
        b: build(root_b, yaw_b, arms_b, phase_b, &params_b),
    }
}

/// Pack a pose track into the requested channel layout.
fn track_to_sequence(
    track: &PoseTrack,
    skeleton: &SkeletonSpec,
    layout: MotionLayout,
) -> Result<MotionSequence> {
    let n = track.root.len();
    let j = skeleton.joint_count();
    if layout.joints != j {
        return Err(DuetError::shape(
            format!("layout for {} joints", layout.joints),
            format!("skeleton with {j}"),
        ));
    }
    let mut positions: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(n);
    for t in 0..n {
        positions.push(forward_kinematics(skeleton, track.root[t], &track.rotations[t])?);
    }
    let fps = SYNTH_FPS;
    let vel = |pts: &Vec<Vec<Vector3<f64>>>, t: usize, joint: usize| -> Vector3<f64> {
        if n == 1 {
            Vector3::zeros()
        } else if t == 0 {
            (pts[1][joint] - pts[0][joint]) * fps
        } else {
            (pts[t][joint] - pts[t - 1][joint]) * fps
        }
    };

    let dim = layout.dim();
    let mut data = vec![0.0f32; n * dim];
    match layout.kind {
        LayoutKind::PosVelRot6d => {
            for t in 0..n {
                let frame = &mut data[t * dim..(t + 1) * dim];
                for joint in 0..j {
                    let p = positions[t][joint];
                    let v = vel(&positions, t, joint);
                    for k in 0..3 {
                        frame[layout.pos_offset() + joint * 3 + k] = p[k] as f32;
                        frame[layout.vel_offset() + joint * 3 + k] = v[k] as f32;
                    }
                }
                for joint in 1..j {
                    let r = track.rotations[t][joint].to_f32();
                    let base = layout.rot_offset() + (joint - 1) * 6;
                    frame[base..base + 6].copy_from_slice(&r);
                }
                let flags = foot_flags(track, t);
                frame[layout.contact_offset()..layout.contact_offset() + 4]
                    .copy_from_slice(&flags);
            }
        }
        LayoutKind::RotRows6d => {
            for t in 0..n {
                let frame = &mut data[t * dim..(t + 1) * dim];
                let p = track.root[t];
                let v = vel(&positions, t, 0);
                for k in 0..3 {
                    frame[k] = p[k] as f32;
                    frame[3 + k] = v[k] as f32;
                }
                for joint in 0..j {
                    let r = track.rotations[t][joint].to_f32();
                    let base = (joint + 1) * 6;
                    frame[base..base + 6].copy_from_slice(&r);
                }
            }
        }
    }
    MotionSequence::new(layout, n, data)
}

/// Alternating heel/toe flags while stepping; firmly planted otherwise.
fn foot_flags(track: &PoseTrack, t: usize) -> [f32; 4] {
    if !track.stepping {
        return [1.0; 4];
    }
    let s = track.step_phase[t].sin();
    let left = if s < 0.0 { 1.0 } else { 0.0 };
    [left, left, 1.0 - left, 1.0 - left]
}

/// Generate `count` synthetic interaction clips.
///
/// Deterministic in every argument: the same call yields bit-identical
/// datasets. Frame counts are drawn per clip from the inclusive
/// `frame_range`.
pub fn synth_dataset(
    seed: u64,
    count: usize,
    skeleton: &SkeletonSpec,
    layout: MotionLayout,
    frame_range: (usize, usize),
) -> Result<Vec<InteractionPair>> {
    if count == 0 {
        return Err(DuetError::InvalidConfig("count must be >= 1".into()));
    }
    if frame_range.0 < 2 || frame_range.0 > frame_range.1 {
        return Err(DuetError::InvalidConfig(format!(
            "bad frame range {frame_range:?}"
        )));
    }
    skeleton.validate()?;
    let joints = find_joints(skeleton)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = rng_for_clip(seed, i as u64);
        let family = FAMILIES[i % FAMILIES.len()];
        let frames = rng.gen_range(frame_range.0..=frame_range.1);
        let tracks = gen_family_tracks(family, &mut rng, frames, skeleton, &joints);
        let person_a = track_to_sequence(&tracks.a, skeleton, layout)?;
        let person_b = track_to_sequence(&tracks.b, skeleton, layout)?;
        let templates = family.text_templates();
        let text = templates[rng.gen_range(0..templates.len())].to_string();
        out.push(InteractionPair::new(
            person_a,
            person_b,
            text,
            family.expects_contact(),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::kinematics::joint_positions;

    fn toy() -> (SkeletonSpec, MotionLayout) {
        let skel = SkeletonSpec::toy_eight_joint();
        let layout = MotionLayout::pos_vel_rot(8);
        (skel, layout)
    }

    #[test]
    fn deterministic_given_seed() {
        let (skel, layout) = toy();
        let a = synth_dataset(9, 8, &skel, layout, (24, 40)).unwrap();
        let b = synth_dataset(9, 8, &skel, layout, (24, 40)).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(10, 8, &skel, layout, (24, 40)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_count_rejected() {
        let (skel, layout) = toy();
        assert!(synth_dataset(1, 0, &skel, layout, (24, 40)).is_err());
    }

    #[test]
    fn contact_annotations_follow_families() {
        let (skel, layout) = toy();
        let ds = synth_dataset(3, 8, &skel, layout, (24, 32)).unwrap();
        for (i, pair) in ds.iter().enumerate() {
            assert_eq!(
                pair.contact_annotated,
                FAMILIES[i % 4].expects_contact(),
                "clip {i}"
            );
            assert_eq!(Family::of_text(&pair.text), Some(FAMILIES[i % 4]));
        }
    }

    #[test]
    fn reach_touch_wrists_meet() {
        let (skel, layout) = toy();
        let wrist = skel
            .joint_names
            .iter()
            .position(|n| n == "r_wrist")
            .unwrap();
        let ds = synth_dataset(17, 12, &skel, layout, (32, 32)).unwrap();
        for (i, pair) in ds.iter().enumerate() {
            if FAMILIES[i % 4] != Family::ReachTouch {
                continue;
            }
            let pa = joint_positions(&pair.person_a, &skel).unwrap();
            let pb = joint_positions(&pair.person_b, &skel).unwrap();
            let min_dist = (0..pair.frames())
                .map(|t| (pa[t][wrist] - pb[t][wrist]).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(min_dist < 0.05, "clip {i}: min wrist distance {min_dist}");
        }
    }

    #[test]
    fn circle_gap_narrows_but_stays_open() {
        let (skel, layout) = toy();
        let ds = synth_dataset(23, 8, &skel, layout, (32, 32)).unwrap();
        for (i, pair) in ds.iter().enumerate() {
            if FAMILIES[i % 4] != Family::Circle {
                continue;
            }
            let mut min_d = f64::INFINITY;
            for t in 0..pair.frames() {
                let a = pair.person_a.position(t, 0);
                let b = pair.person_b.position(t, 0);
                let dx = a[0] - b[0];
                let dz = a[2] - b[2];
                min_d = min_d.min((dx * dx + dz * dz).sqrt());
            }
            // Torso radius is 0.12 per person: gap stays positive yet small.
            assert!(min_d > 0.25 && min_d < 0.40, "clip {i}: min distance {min_d}");
        }
    }

    #[test]
    fn velocities_are_finite_differences() {
        let (skel, layout) = toy();
        let ds = synth_dataset(5, 4, &skel, layout, (16, 16)).unwrap();
        let seq = &ds[0].person_a;
        for t in 1..seq.frames {
            for joint in 0..8 {
                let p1 = seq.position(t, joint);
                let p0 = seq.position(t - 1, joint);
                let base = t * seq.dim() + layout.vel_offset() + joint * 3;
                for k in 0..3 {
                    let v = seq.data[base + k] as f64;
                    let fd = (p1[k] - p0[k]) * SYNTH_FPS;
                    assert!((v - fd).abs() < 1e-4, "t={t} joint={joint} {v} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn rot_rows_layout_also_valid() {
        let skel = SkeletonSpec::toy_eight_joint();
        let layout = MotionLayout::rot_rows(8);
        let ds = synth_dataset(31, 4, &skel, layout, (16, 24)).unwrap();
        for pair in &ds {
            pair.person_a.validate().unwrap();
            pair.person_b.validate().unwrap();
        }
    }
}
