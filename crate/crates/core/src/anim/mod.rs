//! Joint hierarchies, forward kinematics and per-frame pose editing for the
//! captured human animation.
//!
//! A joint's local transform translates by `offset + translation` and then
//! rotates by its local rotation, so a child's world position is
//! `world(parent) * (offset + translation)`. Translation edits therefore live
//! in the parent's space.

pub mod mocap;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Mesh, Vec3};
use crate::skinning::{self, PartTransformSet, SkinningError, SkinningWeights};

/// Quaternions in clip files may be off unit length by at most this much.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum AnimError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint 0 must be the root")]
    RootNotFirst,
    #[error("joint {joint} has parent {parent}; parents must precede their children")]
    Topology { joint: usize, parent: usize },
    #[error("joint {0} has no parent but joint 0 is already the root")]
    MultipleRoots(usize),
    #[error("frame {frame} has {found} poses for {expected} joints")]
    PoseCount { frame: usize, expected: usize, found: usize },
    #[error("frame {frame} joint {joint}: quaternion norm {norm} is not unit")]
    Quaternion { frame: usize, joint: usize, norm: f64 },
    #[error("frame rate must be positive, got {0}")]
    FrameRate(f64),
    #[error("frame {frame} out of range for {count} frames")]
    FrameOutOfRange { frame: usize, count: usize },
    #[error("joint {joint} out of range for {count} joints")]
    JointOutOfRange { joint: usize, count: usize },
    #[error("skinning weights have {parts} parts but skeleton has {joints} joints")]
    JointCountMismatch { parts: usize, joints: usize },
    #[error("invalid clip JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Skinning(#[from] SkinningError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
}

/// Joints in topological order with joint 0 as the single root.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self, AnimError> {
        let root = joints.first().ok_or(AnimError::Empty)?;
        if root.parent.is_some() {
            return Err(match root.parent {
                Some(0) => AnimError::Topology { joint: 0, parent: 0 },
                _ => AnimError::RootNotFirst,
            });
        }
        for (j, joint) in joints.iter().enumerate().skip(1) {
            match joint.parent {
                None => return Err(AnimError::MultipleRoots(j)),
                Some(p) if p >= j => return Err(AnimError::Topology { joint: j, parent: p }),
                Some(_) => {}
            }
        }
        Ok(Skeleton { joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl LocalPose {
    pub fn identity() -> Self {
        LocalPose {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(rotation: UnitQuaternion<f64>) -> Self {
        LocalPose {
            rotation,
            translation: Vec3::zeros(),
        }
    }
}

impl Default for LocalPose {
    fn default() -> Self {
        LocalPose::identity()
    }
}

/// World transform of every joint for one frame of local poses.
pub fn forward_kinematics(skeleton: &Skeleton, frame: &[LocalPose]) -> Result<Vec<Isometry3<f64>>, AnimError> {
    if frame.len() != skeleton.len() {
        return Err(AnimError::PoseCount {
            frame: 0,
            expected: skeleton.len(),
            found: frame.len(),
        });
    }
    let mut world: Vec<Isometry3<f64>> = Vec::with_capacity(skeleton.len());
    for (joint, pose) in skeleton.joints.iter().zip(frame) {
        let local = Isometry3::from_parts(Translation3::from(joint.offset + pose.translation), pose.rotation);
        let global = match joint.parent {
            Some(p) => world[p] * local,
            None => local,
        };
        world.push(global);
    }
    Ok(world)
}

/// Bind pose: every local rotation identity, no translation.
pub fn rest_world(skeleton: &Skeleton) -> Vec<Isometry3<f64>> {
    forward_kinematics(skeleton, &vec![LocalPose::identity(); skeleton.len()]).expect("pose count matches")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimationClip {
    skeleton: Skeleton,
    frames: Vec<Vec<LocalPose>>,
    frame_rate: f64,
}

impl AnimationClip {
    pub fn new(skeleton: Skeleton, frames: Vec<Vec<LocalPose>>, frame_rate: f64) -> Result<Self, AnimError> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(AnimError::FrameRate(frame_rate));
        }
        for (f, poses) in frames.iter().enumerate() {
            if poses.len() != skeleton.len() {
                return Err(AnimError::PoseCount {
                    frame: f,
                    expected: skeleton.len(),
                    found: poses.len(),
                });
            }
        }
        Ok(AnimationClip {
            skeleton,
            frames,
            frame_rate,
        })
    }

    /// `frame_count` frames of the bind pose.
    pub fn rest(skeleton: Skeleton, frame_count: usize, frame_rate: f64) -> Result<Self, AnimError> {
        let frames = vec![vec![LocalPose::identity(); skeleton.len()]; frame_count];
        AnimationClip::new(skeleton, frames, frame_rate)
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn frames(&self) -> &[Vec<LocalPose>] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &[LocalPose] {
        &self.frames[index]
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate
    }

    pub fn world_transforms(&self, frame: usize) -> Vec<Isometry3<f64>> {
        forward_kinematics(&self.skeleton, &self.frames[frame]).expect("validated at construction")
    }

    pub fn from_json(text: &str) -> Result<Self, AnimError> {
        parse_clip(text)
    }

    pub fn to_json(&self) -> String {
        serialize_clip(self)
    }
}

/// Six-degree-of-freedom correction of one joint in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEdit {
    pub frame_index: usize,
    pub joint_index: usize,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl JointEdit {
    pub fn is_identity(&self) -> bool {
        self.rotation == UnitQuaternion::identity() && self.translation == Vec3::zeros()
    }

    pub fn inverse(&self) -> JointEdit {
        JointEdit {
            rotation: self.rotation.inverse(),
            translation: -self.translation,
            ..*self
        }
    }
}

/// Pre-composes the edit's rotation and adds its translation to exactly one
/// pose. Every other pose is copied unchanged.
pub fn apply_joint_edit(clip: &AnimationClip, edit: &JointEdit) -> Result<AnimationClip, AnimError> {
    if edit.frame_index >= clip.frame_count() {
        return Err(AnimError::FrameOutOfRange {
            frame: edit.frame_index,
            count: clip.frame_count(),
        });
    }
    if edit.joint_index >= clip.skeleton.len() {
        return Err(AnimError::JointOutOfRange {
            joint: edit.joint_index,
            count: clip.skeleton.len(),
        });
    }
    let mut out = clip.clone();
    let pose = &mut out.frames[edit.frame_index][edit.joint_index];
    if edit.rotation != UnitQuaternion::identity() {
        let mut rotation = edit.rotation * pose.rotation;
        rotation.renormalize();
        pose.rotation = rotation;
    }
    pose.translation += edit.translation;
    Ok(out)
}

/// Poses `rest_mesh` for every frame with LBS driven by
/// `world(j) * rest_world(j)^-1`.
pub fn skin_clip(clip: &AnimationClip, rest_mesh: &Mesh, skeletal_weights: &SkinningWeights) -> Result<Vec<Mesh>, AnimError> {
    if skeletal_weights.part_count() != clip.skeleton.len() {
        return Err(AnimError::JointCountMismatch {
            parts: skeletal_weights.part_count(),
            joints: clip.skeleton.len(),
        });
    }
    skeletal_weights.ensure_bound_to(rest_mesh)?;
    let bind_inverse: Vec<Isometry3<f64>> = rest_world(&clip.skeleton).iter().map(|w| w.inverse()).collect();
    (0..clip.frame_count())
        .into_par_iter()
        .map(|f| {
            let world = clip.world_transforms(f);
            let mut transforms = PartTransformSet::identity(clip.skeleton.len(), f);
            for (j, (w, inv)) in world.iter().zip(&bind_inverse).enumerate() {
                let delta = w * inv;
                transforms.rotations[j] = delta.rotation;
                transforms.translations[j] = delta.translation.vector;
            }
            Ok(skinning::lbs_deform(rest_mesh, skeletal_weights, &transforms)?)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ClipFile {
    frame_rate: f64,
    skeleton: Vec<JointRecord>,
    frames: Vec<Vec<PoseRecord>>,
}

#[derive(Serialize, Deserialize)]
struct JointRecord {
    name: String,
    parent: Option<usize>,
    offset: [f64; 3],
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PoseRecord {
    pub rot: [f64; 4],
    pub trans: [f64; 3],
}

/// Wire form of a [`JointEdit`]: `{"frame","joint","rot":[w,x,y,z],"trans"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEditRecord {
    pub frame: usize,
    pub joint: usize,
    #[serde(default = "identity_wxyz")]
    pub rot: [f64; 4],
    #[serde(default)]
    pub trans: [f64; 3],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<JointEditRecord> for JointEdit {
    type Error = AnimError;

    fn try_from(r: JointEditRecord) -> Result<Self, AnimError> {
        Ok(JointEdit {
            frame_index: r.frame,
            joint_index: r.joint,
            rotation: unit_quaternion(r.rot, r.frame, r.joint)?,
            translation: Vec3::from(r.trans),
        })
    }
}

impl From<&JointEdit> for JointEditRecord {
    fn from(e: &JointEdit) -> Self {
        JointEditRecord {
            frame: e.frame_index,
            joint: e.joint_index,
            rot: wxyz(&e.rotation),
            trans: e.translation.into(),
        }
    }
}

fn wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn unit_quaternion(wxyz: [f64; 4], frame: usize, joint: usize) -> Result<UnitQuaternion<f64>, AnimError> {
    let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    let norm = q.norm();
    if !((norm - 1.0).abs() <= QUATERNION_TOLERANCE) {
        return Err(AnimError::Quaternion { frame, joint, norm });
    }
    // leave values that are unit to rounding alone so files round-trip exactly
    if (norm - 1.0).abs() <= 1e-12 {
        Ok(UnitQuaternion::new_unchecked(q))
    } else {
        Ok(UnitQuaternion::new_normalize(q))
    }
}

pub fn parse_clip(text: &str) -> Result<AnimationClip, AnimError> {
    let file: ClipFile = serde_json::from_str(text).map_err(|e| AnimError::Json(e.to_string()))?;
    let joints = file
        .skeleton
        .into_iter()
        .map(|j| Joint {
            name: j.name,
            parent: j.parent,
            offset: Vector3::from(j.offset),
        })
        .collect();
    let skeleton = Skeleton::new(joints)?;
    let mut frames = Vec::with_capacity(file.frames.len());
    for (f, poses) in file.frames.into_iter().enumerate() {
        if poses.len() != skeleton.len() {
            return Err(AnimError::PoseCount {
                frame: f,
                expected: skeleton.len(),
                found: poses.len(),
            });
        }
        let frame = poses
            .into_iter()
            .enumerate()
            .map(|(j, p)| {
                Ok(LocalPose {
                    rotation: unit_quaternion(p.rot, f, j)?,
                    translation: Vector3::from(p.trans),
                })
            })
            .collect::<Result<Vec<_>, AnimError>>()?;
        frames.push(frame);
    }
    AnimationClip::new(skeleton, frames, file.frame_rate)
}

pub fn serialize_clip(clip: &AnimationClip) -> String {
    let file = ClipFile {
        frame_rate: clip.frame_rate,
        skeleton: clip
            .skeleton
            .joints
            .iter()
            .map(|j| JointRecord {
                name: j.name.clone(),
                parent: j.parent,
                offset: j.offset.into(),
            })
            .collect(),
        frames: clip
            .frames
            .iter()
            .map(|poses| {
                poses
                    .iter()
                    .map(|p| PoseRecord {
                        rot: wxyz(&p.rotation),
                        trans: p.translation.into(),
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("clip serializes")
}
