//! Procedural characters for tests, benchmarks and the bundled demo project.
//!
//! Both characters are built from box tubes, one tube per body segment. The
//! human comes with a skeleton, joint-space weights and a short dance clip;
//! the stylized target is a squat big-headed humanoid with 40-part weights
//! whose right-hand tip is mislabelled as right upper arm, the kind of error
//! the weight editor exists to fix.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};

use crate::anim::mocap::MoCapResult;
use crate::anim::{AnimationClip, Joint, LocalPose, Skeleton};
use crate::converter::EditCommand;
use crate::mesh::{Mesh, Vec3};
use crate::skinning::{SkinningWeights, DEFAULT_PART_COUNT};

/// Part label of every fixture segment in the 40-part convention.
pub mod label {
    pub const LOWER_ABDOMEN: usize = 33;
    pub const CHEST: usize = 21;
    pub const HEAD: usize = 35;
    pub const LEFT_UPPER_ARM: usize = 24;
    pub const LEFT_FOREARM: usize = 0;
    pub const LEFT_PALM: usize = 25;
    pub const RIGHT_UPPER_ARM: usize = 31;
    pub const RIGHT_FOREARM: usize = 32;
    pub const RIGHT_PALM: usize = 9;
    pub const LEFT_THIGH: usize = 3;
    pub const LEFT_SHIN: usize = 36;
    pub const LEFT_SOLE: usize = 16;
    pub const RIGHT_THIGH: usize = 6;
    pub const RIGHT_SHIN: usize = 37;
    pub const RIGHT_SOLE: usize = 17;
}

const RINGS: usize = 4;

struct Segment {
    name: &'static str,
    parent: Option<usize>,
    label: usize,
    /// Joint position relative to the parent joint.
    offset: [f64; 3],
    /// Extent of the segment's tube from its joint.
    bone: [f64; 3],
    half_width: f64,
}

fn human_segments() -> Vec<Segment> {
    use label::*;
    let seg = |name, parent, label, offset, bone, half_width| Segment {
        name,
        parent,
        label,
        offset,
        bone,
        half_width,
    };
    vec![
        seg("pelvis", None, LOWER_ABDOMEN, [0.0, 0.95, 0.0], [0.0, 0.25, 0.0], 0.14),
        seg("chest", Some(0), CHEST, [0.0, 0.25, 0.0], [0.0, 0.3, 0.0], 0.16),
        seg("head", Some(1), HEAD, [0.0, 0.35, 0.0], [0.0, 0.22, 0.0], 0.1),
        seg("left_upper_arm", Some(1), LEFT_UPPER_ARM, [0.2, 0.27, 0.0], [0.28, 0.0, 0.0], 0.05),
        seg("left_forearm", Some(3), LEFT_FOREARM, [0.28, 0.0, 0.0], [0.25, 0.0, 0.0], 0.04),
        seg("left_palm", Some(4), LEFT_PALM, [0.25, 0.0, 0.0], [0.12, 0.0, 0.0], 0.035),
        seg("right_upper_arm", Some(1), RIGHT_UPPER_ARM, [-0.2, 0.27, 0.0], [-0.28, 0.0, 0.0], 0.05),
        seg("right_forearm", Some(6), RIGHT_FOREARM, [-0.28, 0.0, 0.0], [-0.25, 0.0, 0.0], 0.04),
        seg("right_palm", Some(7), RIGHT_PALM, [-0.25, 0.0, 0.0], [-0.12, 0.0, 0.0], 0.035),
        seg("left_thigh", Some(0), LEFT_THIGH, [0.1, -0.02, 0.0], [0.0, -0.43, 0.0], 0.07),
        seg("left_shin", Some(9), LEFT_SHIN, [0.0, -0.43, 0.0], [0.0, -0.42, 0.0], 0.055),
        seg("left_foot", Some(10), LEFT_SOLE, [0.0, -0.42, 0.0], [0.0, -0.06, 0.16], 0.045),
        seg("right_thigh", Some(0), RIGHT_THIGH, [-0.1, -0.02, 0.0], [0.0, -0.43, 0.0], 0.07),
        seg("right_shin", Some(12), RIGHT_SHIN, [0.0, -0.43, 0.0], [0.0, -0.42, 0.0], 0.055),
        seg("right_foot", Some(13), RIGHT_SOLE, [0.0, -0.42, 0.0], [0.0, -0.06, 0.16], 0.045),
    ]
}

/// Same topology as the human, squat proportions and a large head.
fn stylized_segments() -> Vec<Segment> {
    let mut segs = human_segments();
    let scale = |v: [f64; 3], s: f64| [v[0] * s, v[1] * s, v[2] * s];
    for s in segs.iter_mut() {
        match s.name {
            "pelvis" => {
                s.offset = [0.0, 0.5, 0.0];
                s.half_width = 0.22;
            }
            "chest" => s.half_width = 0.24,
            "head" => {
                s.bone = [0.0, 0.45, 0.0];
                s.half_width = 0.26;
            }
            n if n.ends_with("arm") || n.ends_with("palm") => {
                s.bone = scale(s.bone, 0.6);
                if n.ends_with("upper_arm") {
                    s.offset = [s.offset[0] * 1.3, s.offset[1], 0.0];
                } else {
                    s.offset = scale(s.offset, 0.6);
                }
                s.half_width *= 1.4;
            }
            n if n.ends_with("thigh") || n.ends_with("shin") => {
                s.bone = scale(s.bone, 0.5);
                if n.ends_with("shin") {
                    s.offset = scale(s.offset, 0.5);
                } else {
                    s.offset = [s.offset[0] * 1.6, s.offset[1], 0.0];
                }
                s.half_width *= 1.5;
            }
            n if n.ends_with("foot") => {
                s.offset = scale(s.offset, 0.5);
                s.half_width *= 1.5;
            }
            _ => {}
        }
    }
    segs
}

/// Box-tube geometry for every segment. Returns the mesh, the segment index
/// of every vertex, and each vertex's ring index along its segment.
fn build_body(name: &str, segments: &[Segment]) -> (Mesh, Vec<usize>, Vec<usize>) {
    let mut joint_pos: Vec<Vec3> = Vec::with_capacity(segments.len());
    for s in segments {
        let base = s.parent.map_or(Vec3::zeros(), |p| joint_pos[p]);
        joint_pos.push(base + Vec3::from(s.offset));
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut owner = Vec::new();
    let mut ring_of = Vec::new();
    for (si, s) in segments.iter().enumerate() {
        let bone = Vec3::from(s.bone);
        let dir = bone.normalize();
        let helper = if dir.y.abs() < 0.9 { Vec3::y() } else { Vec3::z() };
        let u = dir.cross(&helper).normalize() * s.half_width;
        let w = dir.cross(&u).normalize() * s.half_width;
        let first = vertices.len();
        for r in 0..RINGS {
            let center = joint_pos[si] + bone * (r as f64 / (RINGS - 1) as f64);
            for (a, b) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                vertices.push(center + u * a + w * b);
                owner.push(si);
                ring_of.push(r);
            }
        }
        let at = |r: usize, c: usize| first + 4 * r + (c % 4);
        for r in 0..RINGS - 1 {
            for c in 0..4 {
                faces.push([at(r, c), at(r, c + 1), at(r + 1, c + 1)]);
                faces.push([at(r, c), at(r + 1, c + 1), at(r + 1, c)]);
            }
        }
        faces.push([at(0, 0), at(0, 2), at(0, 1)]);
        faces.push([at(0, 0), at(0, 3), at(0, 2)]);
        let last = RINGS - 1;
        faces.push([at(last, 0), at(last, 1), at(last, 2)]);
        faces.push([at(last, 0), at(last, 2), at(last, 3)]);
    }
    (Mesh::new(name, vertices, faces).expect("fixture faces are in range"), owner, ring_of)
}

/// Rows over `column_of(segment)` columns: one-hot, except ring 0 of a
/// non-root segment which is shared half and half with the parent segment.
fn blended_weights(
    part_count: usize,
    segments: &[Segment],
    owner: &[usize],
    ring_of: &[usize],
    column_of: impl Fn(usize, usize) -> usize,
) -> SkinningWeights {
    let mut data = vec![0.0; owner.len() * part_count];
    for (v, (&s, &r)) in owner.iter().zip(ring_of).enumerate() {
        let row = &mut data[v * part_count..(v + 1) * part_count];
        let own = column_of(s, v);
        match segments[s].parent {
            Some(p) if r == 0 => {
                row[own] += 0.5;
                row[column_of(p, v)] += 0.5;
            }
            _ => row[own] = 1.0,
        }
    }
    SkinningWeights::from_flat(part_count, data).expect("fixture weights are rectangular")
}

pub struct HumanFixture {
    pub skeleton: Skeleton,
    pub mesh: Mesh,
    /// One column per joint; drives the clip.
    pub skeletal_weights: SkinningWeights,
    /// 40-part weights used for transfer.
    pub part_weights: SkinningWeights,
    pub clip: AnimationClip,
}

impl HumanFixture {
    pub fn mocap_result(&self) -> MoCapResult {
        MoCapResult::new(self.clip.clone(), self.mesh.clone(), self.skeletal_weights.clone()).expect("fixture is consistent")
    }
}

pub fn human_skeleton() -> Skeleton {
    let joints = human_segments()
        .into_iter()
        .map(|s| Joint {
            name: s.name.to_string(),
            parent: s.parent,
            offset: Vec3::from(s.offset),
        })
        .collect();
    Skeleton::new(joints).expect("fixture skeleton is topological")
}

pub fn human(frame_count: usize) -> HumanFixture {
    let segments = human_segments();
    let (mesh, owner, rings) = build_body("human", &segments);
    let skeletal_weights = blended_weights(segments.len(), &segments, &owner, &rings, |s, _| s);
    let part_weights = blended_weights(DEFAULT_PART_COUNT, &segments, &owner, &rings, |s, _| segments[s].label);
    let skeleton = human_skeleton();
    let clip = dance_clip(&skeleton, frame_count);
    HumanFixture {
        skeleton,
        mesh,
        skeletal_weights,
        part_weights,
        clip,
    }
}

/// A second of arm waving, knee lifts and a little hip sway at 24 fps.
pub fn dance_clip(skeleton: &Skeleton, frame_count: usize) -> AnimationClip {
    let axis = |x: f64, y: f64, z: f64| nalgebra::Unit::new_normalize(Vector3::new(x, y, z));
    let rot = |a: &nalgebra::Unit<Vec3>, angle: f64| UnitQuaternion::from_axis_angle(a, angle);
    let frames = (0..frame_count)
        .map(|f| {
            let phase = 2.0 * PI * f as f64 / frame_count.max(1) as f64;
            let s = phase.sin();
            let c = phase.cos();
            let mut poses = vec![LocalPose::identity(); skeleton.len()];
            let mut set = |name: &str, pose: LocalPose| {
                let j = skeleton.find(name).expect("fixture joint");
                poses[j] = pose;
            };
            set(
                "pelvis",
                LocalPose {
                    rotation: rot(&axis(0.0, 1.0, 0.0), 0.25 * s),
                    translation: Vector3::new(0.05 * s, 0.02 * c.abs(), 0.0),
                },
            );
            set("chest", LocalPose::rotation(rot(&axis(0.0, 0.0, 1.0), 0.1 * s)));
            set("head", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), 0.15 * c)));
            set("left_upper_arm", LocalPose::rotation(rot(&axis(0.0, 0.0, 1.0), 0.9 * s)));
            set("left_forearm", LocalPose::rotation(rot(&axis(0.0, 1.0, 0.0), 0.6 + 0.4 * c)));
            set("left_palm", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), 0.5 * s)));
            set("right_upper_arm", LocalPose::rotation(rot(&axis(0.0, 0.3, 1.0), -0.8 * c)));
            set("right_forearm", LocalPose::rotation(rot(&axis(0.0, 1.0, 0.0), -0.7 - 0.5 * s)));
            set("right_palm", LocalPose::rotation(rot(&axis(0.0, 0.0, 1.0), 0.9 * c)));
            set("left_thigh", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), -0.6 * s.max(0.0))));
            set("left_shin", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), 0.9 * s.max(0.0))));
            set("right_thigh", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), -0.6 * (-s).max(0.0))));
            set("right_shin", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), 0.9 * (-s).max(0.0))));
            set("right_foot", LocalPose::rotation(rot(&axis(1.0, 0.0, 0.0), 0.2 * c)));
            poses
        })
        .collect();
    AnimationClip::new(skeleton.clone(), frames, 24.0).expect("fixture clip is consistent")
}

pub struct TargetFixture {
    pub mesh: Mesh,
    /// 40-part weights with the right-hand tip mislabelled.
    pub weights: SkinningWeights,
    /// The vertices carrying the wrong label.
    pub mislabeled: Vec<usize>,
    /// Paint action that puts the tip back on the right palm.
    pub fix: EditCommand,
}

/// Stylized humanoid whose outer two rings of the right palm are labelled
/// right upper arm.
pub fn stylized_target() -> TargetFixture {
    let segments = stylized_segments();
    let (mesh, owner, rings) = build_body("stylized", &segments);
    let palm = segments.iter().position(|s| s.name == "right_palm").expect("palm segment");
    let is_mislabeled = |v: usize| owner[v] == palm && rings[v] >= RINGS - 2;
    let weights = blended_weights(DEFAULT_PART_COUNT, &segments, &owner, &rings, |s, v| {
        if is_mislabeled(v) {
            label::RIGHT_UPPER_ARM
        } else {
            segments[s].label
        }
    });
    let mislabeled: Vec<usize> = (0..mesh.vertex_count()).filter(|&v| is_mislabeled(v)).collect();
    let fix = EditCommand::new(mislabeled.iter().copied(), label::RIGHT_PALM);
    TargetFixture {
        mesh,
        weights,
        mislabeled,
        fix,
    }
}
