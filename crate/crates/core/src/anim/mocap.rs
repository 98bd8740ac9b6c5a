//! Video motion-capture client abstraction.
//!
//! A capture service turns a short human video into an animation clip plus
//! the rigged human mesh it drives. [`mocap_submit`] enforces the duration
//! limit before any client is contacted.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnimError, AnimationClip};
use crate::mesh::{self, Mesh, MeshError};
use crate::skinning::{SkinningError, SkinningWeights};

/// Longest accepted input video, in seconds.
pub const MAX_VIDEO_SECONDS: f64 = 20.0;

pub const BUNDLE_SUFFIX: &str = ".bvh-bundle";
pub const BUNDLE_CLIP: &str = "clip.json";
pub const BUNDLE_MESH: &str = "mesh.obj";
pub const BUNDLE_WEIGHTS: &str = "weights.json";

#[derive(Debug, Error)]
pub enum MoCapError {
    #[error("video is {seconds} s long; the limit is {limit} s")]
    DurationExceeded { seconds: f64, limit: f64 },
    #[error("invalid video duration {0}")]
    InvalidDuration(f64),
    #[error("no capture found for {0:?}")]
    NotFound(String),
    #[error("capture service unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("capture job failed: {0}")]
    JobFailed(String),
    #[error("capture bundle {path}: {message}")]
    Bundle { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoCapRequest {
    /// File name or URL of the uploaded video.
    pub video: String,
    #[serde(rename = "duration")]
    pub duration_secs: f64,
}

impl MoCapRequest {
    pub fn new(video: impl Into<String>, duration_secs: f64) -> Self {
        MoCapRequest {
            video: video.into(),
            duration_secs,
        }
    }

    pub fn check(&self) -> Result<(), MoCapError> {
        if !(self.duration_secs >= 0.0) || !self.duration_secs.is_finite() {
            return Err(MoCapError::InvalidDuration(self.duration_secs));
        }
        if self.duration_secs > MAX_VIDEO_SECONDS {
            return Err(MoCapError::DurationExceeded {
                seconds: self.duration_secs,
                limit: MAX_VIDEO_SECONDS,
            });
        }
        Ok(())
    }

    /// Video file name without directories or extension.
    pub fn video_stem(&self) -> &str {
        let name = self.video.rsplit(['/', '\\']).next().unwrap_or(&self.video);
        match name.rfind('.') {
            Some(dot) if dot > 0 => &name[..dot],
            _ => name,
        }
    }
}

/// Captured human animation with its rigged rest mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MoCapResult {
    pub clip: AnimationClip,
    pub mesh: Mesh,
    /// Joint-space weights; part count equals the joint count.
    pub weights: SkinningWeights,
}

impl MoCapResult {
    pub fn new(clip: AnimationClip, mesh: Mesh, weights: SkinningWeights) -> Result<Self, String> {
        weights.ensure_bound_to(&mesh).map_err(|e| e.to_string())?;
        if weights.part_count() != clip.skeleton().len() {
            return Err(AnimError::JointCountMismatch {
                parts: weights.part_count(),
                joints: clip.skeleton().len(),
            }
            .to_string());
        }
        let report = weights.validate();
        if !report.is_valid() {
            return Err(report.to_string());
        }
        Ok(MoCapResult { clip, mesh, weights })
    }

    /// Parses the three bundle files.
    pub fn from_texts(clip_json: &str, mesh_obj: &str, weights_json: &str) -> Result<Self, String> {
        let clip = AnimationClip::from_json(clip_json).map_err(|e| format!("{BUNDLE_CLIP}: {e}"))?;
        let mesh = mesh::parse_obj(mesh_obj).map_err(|e: MeshError| format!("{BUNDLE_MESH}: {e}"))?;
        let weights = SkinningWeights::from_json(weights_json).map_err(|e: SkinningError| format!("{BUNDLE_WEIGHTS}: {e}"))?;
        MoCapResult::new(clip, mesh, weights)
    }
}

pub trait MoCapClient: Send + Sync {
    fn capture(&self, request: &MoCapRequest) -> Result<MoCapResult, MoCapError>;
}

/// Checks the request and only then hands it to the client.
pub fn mocap_submit(request: &MoCapRequest, client: &dyn MoCapClient) -> Result<MoCapResult, MoCapError> {
    request.check()?;
    client.capture(request)
}

/// Serves captures from `<fixtures>/<video stem>.bvh-bundle/`.
#[derive(Debug, Clone)]
pub struct MockMoCapClient {
    fixtures: PathBuf,
}

impl MockMoCapClient {
    pub fn new(fixtures: impl Into<PathBuf>) -> Self {
        MockMoCapClient {
            fixtures: fixtures.into(),
        }
    }

    pub fn bundle_dir(&self, request: &MoCapRequest) -> PathBuf {
        self.fixtures.join(format!("{}{BUNDLE_SUFFIX}", request.video_stem()))
    }
}

impl MoCapClient for MockMoCapClient {
    fn capture(&self, request: &MoCapRequest) -> Result<MoCapResult, MoCapError> {
        let dir = self.bundle_dir(request);
        if !dir.is_dir() {
            return Err(MoCapError::NotFound(request.video.clone()));
        }
        load_bundle(&dir)
    }
}

pub fn load_bundle(dir: &Path) -> Result<MoCapResult, MoCapError> {
    let read = |name: &str| {
        fs::read_to_string(dir.join(name)).map_err(|e| MoCapError::Bundle {
            path: dir.join(name),
            message: e.to_string(),
        })
    };
    let (clip, mesh, weights) = (read(BUNDLE_CLIP)?, read(BUNDLE_MESH)?, read(BUNDLE_WEIGHTS)?);
    MoCapResult::from_texts(&clip, &mesh, &weights).map_err(|message| MoCapError::Bundle {
        path: dir.to_path_buf(),
        message,
    })
}

pub fn write_bundle(dir: &Path, result: &MoCapResult) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(BUNDLE_CLIP), result.clip.to_json())?;
    fs::write(dir.join(BUNDLE_MESH), mesh::serialize_obj(&result.mesh))?;
    let weights = result
        .weights
        .to_json()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    fs::write(dir.join(BUNDLE_WEIGHTS), weights)
}
