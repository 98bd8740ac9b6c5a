//! Skeleton-free motion transfer.
//!
//! A human clip is skinned onto its rest mesh, each frame is explained as a
//! set of per-part rigid transforms through the human's part weights, and
//! those transforms drive any target mesh carrying weights over the same
//! part labels. The [`converter`] edits target weights from painted labels,
//! and [`pipeline`] ties the steps into a replayable project.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anim;
pub mod converter;
pub mod fixtures;
pub mod labels;
pub mod mesh;
pub mod pipeline;
pub mod retarget;
pub mod skinning;

pub use anim::mocap::{MoCapClient, MoCapError, MoCapRequest, MoCapResult, MockMoCapClient};
pub use anim::{AnimError, AnimationClip, Joint, JointEdit, JointEditRecord, LocalPose, Skeleton};
pub use converter::{ConverterConfig, ConverterError, EditCommand};
pub use mesh::{Mesh, MeshError, NormalizationRecord, Vec3};
pub use pipeline::{Project, Stage};
pub use retarget::{FitDiagnostics, PartFit, RetargetError, TransferSession};
pub use skinning::{PartLabel, PartTransformSet, SkinningError, SkinningWeights};
