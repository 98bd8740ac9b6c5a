//! Project state and the upload → capture → transfer → results workflow.
//!
//! A project keeps its uploaded inputs untouched and an append-only history
//! of pose and weight edits. The current clip and target weights are always
//! the inputs with the history folded over them, so replaying the history on
//! a fresh project reproduces every output.

pub mod export;
pub mod palette;
pub mod store;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anim::mocap::{self, MoCapClient, MoCapError, MoCapRequest};
use crate::anim::{self, AnimError, AnimationClip, JointEdit, JointEditRecord};
use crate::converter::{self, ConverterConfig, ConverterError, EditCommand};
use crate::mesh::{self, Mesh, MeshError};
use crate::retarget::{self, FitDiagnostics, RetargetError, TransferSession};
use crate::skinning::{self, PartLabel, SkinningError, SkinningWeights, WeightReport};

pub use export::{export_results, Manifest};
pub use palette::{label_colors, LabelPalette};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{what}: {source}")]
    Mesh {
        what: &'static str,
        #[source]
        source: MeshError,
    },
    #[error("{what}: {source}")]
    Weights {
        what: &'static str,
        #[source]
        source: SkinningError,
    },
    #[error("{what}: {report}")]
    InvalidWeights { what: &'static str, report: WeightReport },
    #[error("{what}: {source}")]
    Clip {
        what: &'static str,
        #[source]
        source: AnimError,
    },
    #[error("{0}")]
    Bundle(String),
    #[error("no project {0:?}")]
    NotFound(String),
    #[error("invalid project id {0:?}")]
    InvalidId(String),
    #[error("project has no animation clip yet; run capture or upload a clip")]
    NoClip,
    #[error("no transfer results yet; run motion transfer first")]
    NoResults,
    #[error("frame {frame} out of range for {count} frames")]
    FrameOutOfRange { frame: usize, count: usize },
    #[error("label {label} out of range for {part_count} parts")]
    LabelOutOfRange { label: usize, part_count: usize },
    #[error("cannot move from {from} to {to}: {reason}")]
    Stage { from: Stage, to: Stage, reason: &'static str },
    #[error("capture would discard {0} existing pose edit(s)")]
    CaptureAfterPoseEdits(usize),
    #[error(transparent)]
    MoCap(#[from] MoCapError),
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt project file {path}: {message}")]
    Corrupt { path: std::path::PathBuf, message: String },
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error is a problem with user input rather than with the
    /// environment.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, PipelineError::Io { .. } | PipelineError::Corrupt { .. })
            && !matches!(self, PipelineError::MoCap(MoCapError::Transport { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Upload,
    MoCap,
    MoTrans,
    Results,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Upload => "upload",
            Stage::MoCap => "mocap",
            Stage::MoTrans => "motrans",
            Stage::Results => "results",
        })
    }
}

/// Raw uploaded files for the human side.
#[derive(Debug, Clone, Default)]
pub struct SourceUpload {
    pub mesh_obj: Option<String>,
    /// Joint-space weights driving the clip.
    pub skeletal_weights_json: Option<String>,
    /// Part weights used for transfer; the skeletal weights are used when absent.
    pub part_weights_json: Option<String>,
    pub clip_json: Option<String>,
    pub video: Option<MoCapRequest>,
}

#[derive(Debug, Clone, Default)]
pub struct TargetUpload {
    pub mesh_obj: String,
    pub weights_json: String,
}

/// Parsed and validated human side.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBundle {
    pub mesh: Option<Mesh>,
    pub skeletal_weights: Option<SkinningWeights>,
    pub part_weights: Option<SkinningWeights>,
    pub clip: Option<AnimationClip>,
    pub video: Option<MoCapRequest>,
}

impl SourceBundle {
    /// Weights the transfer fits against.
    pub fn transfer_weights(&self) -> Option<&SkinningWeights> {
        self.part_weights.as_ref().or(self.skeletal_weights.as_ref())
    }

    fn check(&self) -> Result<(), PipelineError> {
        if let (Some(mesh), Some(w)) = (&self.mesh, &self.skeletal_weights) {
            w.ensure_bound_to(mesh).map_err(|source| PipelineError::Weights {
                what: "source weights",
                source,
            })?;
        }
        if let (Some(mesh), Some(w)) = (&self.mesh, &self.part_weights) {
            w.ensure_bound_to(mesh).map_err(|source| PipelineError::Weights {
                what: "source part weights",
                source,
            })?;
        }
        if let (Some(clip), Some(w)) = (&self.clip, &self.skeletal_weights) {
            if w.part_count() != clip.skeleton().len() {
                return Err(PipelineError::Clip {
                    what: "source clip",
                    source: AnimError::JointCountMismatch {
                        parts: w.part_count(),
                        joints: clip.skeleton().len(),
                    },
                });
            }
        }
        let has_capture = self.clip.is_some() && self.mesh.is_some() && self.skeletal_weights.is_some();
        if !has_capture && self.video.is_none() {
            return Err(PipelineError::Bundle(
                "source needs either a clip with its rigged mesh and weights, or a video to capture".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetBundle {
    pub mesh: Mesh,
    pub weights: SkinningWeights,
}

fn parse_mesh(what: &'static str, text: &str) -> Result<Mesh, PipelineError> {
    let mesh = mesh::parse_obj(text).map_err(|source| PipelineError::Mesh { what, source })?;
    if mesh.vertices.is_empty() {
        return Err(PipelineError::Mesh {
            what,
            source: MeshError::Degenerate("mesh has no vertices".into()),
        });
    }
    Ok(mesh)
}

/// Parses and checks the simplex constraint. Fresh uploads are then snapped
/// to exact L1 norm; stored files were snapped already and load bit-exact.
fn parse_weights(what: &'static str, text: &str, canonicalize: bool) -> Result<SkinningWeights, PipelineError> {
    let weights = SkinningWeights::from_json(text).map_err(|source| PipelineError::Weights { what, source })?;
    let report = weights.validate();
    if !report.is_valid() {
        return Err(PipelineError::InvalidWeights { what, report });
    }
    if !canonicalize {
        return Ok(weights);
    }
    skinning::renormalize(&weights).map_err(|source| PipelineError::Weights { what, source })
}

impl SourceUpload {
    pub fn parse(&self) -> Result<SourceBundle, PipelineError> {
        self.parse_with(true)
    }

    pub(crate) fn parse_with(&self, canonicalize: bool) -> Result<SourceBundle, PipelineError> {
        let bundle = SourceBundle {
            mesh: self.mesh_obj.as_deref().map(|t| parse_mesh("source mesh", t)).transpose()?,
            skeletal_weights: self
                .skeletal_weights_json
                .as_deref()
                .map(|t| parse_weights("source weights", t, canonicalize))
                .transpose()?,
            part_weights: self
                .part_weights_json
                .as_deref()
                .map(|t| parse_weights("source part weights", t, canonicalize))
                .transpose()?,
            clip: self
                .clip_json
                .as_deref()
                .map(|t| AnimationClip::from_json(t).map_err(|source| PipelineError::Clip { what: "source clip", source }))
                .transpose()?,
            video: self.video.clone(),
        };
        if let Some(video) = &bundle.video {
            video.check()?;
        }
        bundle.check()?;
        Ok(bundle)
    }
}

impl TargetUpload {
    pub fn parse(&self) -> Result<TargetBundle, PipelineError> {
        self.parse_with(true)
    }

    pub(crate) fn parse_with(&self, canonicalize: bool) -> Result<TargetBundle, PipelineError> {
        let mesh = parse_mesh("target mesh", &self.mesh_obj)?;
        let weights = parse_weights("target weights", &self.weights_json, canonicalize)?;
        weights.ensure_bound_to(&mesh).map_err(|source| PipelineError::Weights {
            what: "target weights",
            source,
        })?;
        Ok(TargetBundle { mesh, weights })
    }
}

/// One recorded editor action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    Weight {
        #[serde(flatten)]
        command: EditCommand,
        config: ConverterConfig,
    },
    Pose {
        #[serde(flatten)]
        edit: JointEditRecord,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    pub edit: Edit,
}

/// Identifies one transfer computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    /// Source motion: clip, human mesh and skeletal weights.
    pub clip: String,
    /// Source part weights, target mesh and target weights.
    pub weights: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotransResult {
    pub key: CacheKey,
    pub frame_rate: f64,
    /// Target frames in the target's original coordinates.
    pub frames: Vec<Mesh>,
    pub diagnostics: Vec<FitDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct MotransOutcome {
    pub result: Arc<MotransResult>,
    pub cache_hit: bool,
}

#[derive(Debug, Clone)]
pub struct Project {
    id: String,
    stage: Stage,
    source: SourceBundle,
    target: TargetBundle,
    history: Vec<HistoryEntry>,
    clip: Option<AnimationClip>,
    target_weights: SkinningWeights,
    cache: HashMap<CacheKey, Arc<MotransResult>>,
    latest: Option<CacheKey>,
}

/// Validates both bundles and opens a project at the capture stage.
pub fn create_project(id: impl Into<String>, source: &SourceUpload, target: &TargetUpload) -> Result<Project, PipelineError> {
    let source = source.parse()?;
    let target = target.parse()?;
    Project::from_bundles(id.into(), source, target)
}

fn hash_weights(hasher: &mut Sha256, w: &SkinningWeights) {
    hasher.update((w.part_count() as u64).to_le_bytes());
    hasher.update((w.vertex_count() as u64).to_le_bytes());
    for x in w.as_flat() {
        hasher.update(x.to_le_bytes());
    }
}

fn hash_mesh(hasher: &mut Sha256, m: &Mesh) {
    hasher.update((m.vertices.len() as u64).to_le_bytes());
    for v in &m.vertices {
        for c in v.iter() {
            hasher.update(c.to_le_bytes());
        }
    }
    hasher.update((m.faces.len() as u64).to_le_bytes());
    for f in &m.faces {
        for &i in f {
            hasher.update((i as u64).to_le_bytes());
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Project {
    pub(crate) fn from_bundles(id: String, source: SourceBundle, target: TargetBundle) -> Result<Project, PipelineError> {
        if let Some(w) = source.transfer_weights() {
            if w.part_count() != target.weights.part_count() {
                return Err(PipelineError::Retarget(RetargetError::PartCountMismatch {
                    source_parts: w.part_count(),
                    target_parts: target.weights.part_count(),
                }));
            }
        }
        Ok(Project {
            id,
            stage: Stage::MoCap,
            clip: source.clip.clone(),
            target_weights: target.weights.clone(),
            source,
            target,
            history: Vec::new(),
            cache: HashMap::new(),
            latest: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn source(&self) -> &SourceBundle {
        &self.source
    }

    pub fn target(&self) -> &TargetBundle {
        &self.target
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Clip with all pose edits applied.
    pub fn clip(&self) -> Option<&AnimationClip> {
        self.clip.as_ref()
    }

    /// Target weights with all weight edits applied.
    pub fn target_weights(&self) -> &SkinningWeights {
        &self.target_weights
    }

    pub fn part_count(&self) -> usize {
        self.target_weights.part_count()
    }

    /// Moves backwards freely; forward moves need the earlier stage's output.
    pub fn set_stage(&mut self, to: Stage) -> Result<(), PipelineError> {
        let from = self.stage;
        let ready = match to {
            Stage::Upload | Stage::MoCap => true,
            Stage::MoTrans => self.clip.is_some(),
            Stage::Results => self.latest_result().is_some(),
        };
        if to > from && !ready {
            return Err(PipelineError::Stage {
                from,
                to,
                reason: "the previous stage has not produced its output",
            });
        }
        self.stage = to;
        Ok(())
    }

    /// Fills the human side from the capture service.
    pub fn run_mocap(&mut self, request: &MoCapRequest, client: &dyn MoCapClient) -> Result<(), PipelineError> {
        let pose_edits = self.history.iter().filter(|h| matches!(h.edit, Edit::Pose { .. })).count();
        if pose_edits > 0 {
            return Err(PipelineError::CaptureAfterPoseEdits(pose_edits));
        }
        let captured = mocap::mocap_submit(request, client)?;
        if let Some(part) = &self.source.part_weights {
            part.ensure_bound_to(&captured.mesh).map_err(|source| PipelineError::Weights {
                what: "source part weights vs captured mesh",
                source,
            })?;
        } else if captured.weights.part_count() != self.part_count() {
            return Err(PipelineError::Retarget(RetargetError::PartCountMismatch {
                source_parts: captured.weights.part_count(),
                target_parts: self.part_count(),
            }));
        }
        self.source.clip = Some(captured.clip.clone());
        self.source.mesh = Some(captured.mesh);
        let weights = skinning::renormalize(&captured.weights).map_err(|source| PipelineError::Weights {
            what: "captured weights",
            source,
        })?;
        self.source.skeletal_weights = Some(weights);
        self.source.video = Some(request.clone());
        self.clip = Some(captured.clip);
        self.stage = Stage::MoCap;
        Ok(())
    }

    pub fn apply_pose_edit(&mut self, edit: &JointEdit) -> Result<(), PipelineError> {
        self.apply_pose_edit_at(edit, now_ms())
    }

    pub fn apply_pose_edit_at(&mut self, edit: &JointEdit, timestamp_ms: u64) -> Result<(), PipelineError> {
        let clip = self.clip.as_ref().ok_or(PipelineError::NoClip)?;
        let edited = anim::apply_joint_edit(clip, edit).map_err(|source| PipelineError::Clip {
            what: "pose edit",
            source,
        })?;
        self.clip = Some(edited);
        self.history.push(HistoryEntry {
            timestamp_ms,
            edit: Edit::Pose { edit: edit.into() },
        });
        Ok(())
    }

    pub fn apply_weight_edit(&mut self, command: &EditCommand, config: &ConverterConfig) -> Result<(), PipelineError> {
        self.apply_weight_edit_at(command, config, now_ms())
    }

    pub fn apply_weight_edit_at(
        &mut self,
        command: &EditCommand,
        config: &ConverterConfig,
        timestamp_ms: u64,
    ) -> Result<(), PipelineError> {
        self.target_weights = converter::convert_edit(&self.target.mesh, &self.target_weights, command, config)?;
        self.history.push(HistoryEntry {
            timestamp_ms,
            edit: Edit::Weight {
                command: command.clone(),
                config: *config,
            },
        });
        Ok(())
    }

    pub fn apply_edit(&mut self, entry: &HistoryEntry) -> Result<(), PipelineError> {
        match &entry.edit {
            Edit::Weight { command, config } => self.apply_weight_edit_at(command, config, entry.timestamp_ms),
            Edit::Pose { edit } => {
                let edit = JointEdit::try_from(edit.clone()).map_err(|source| PipelineError::Clip {
                    what: "pose edit",
                    source,
                })?;
                self.apply_pose_edit_at(&edit, entry.timestamp_ms)
            }
        }
    }

    /// Fresh project from the same inputs with the history re-applied.
    pub fn replay(&self) -> Result<Project, PipelineError> {
        let mut fresh = Project::from_bundles(self.id.clone(), self.source.clone(), self.target.clone())?;
        for entry in &self.history {
            fresh.apply_edit(entry)?;
        }
        fresh.stage = self.stage.min(Stage::MoTrans);
        Ok(fresh)
    }

    pub fn cache_key(&self) -> Result<CacheKey, PipelineError> {
        let clip = self.clip.as_ref().ok_or(PipelineError::NoClip)?;
        let mut h = Sha256::new();
        h.update(clip.to_json().as_bytes());
        if let Some(mesh) = &self.source.mesh {
            hash_mesh(&mut h, mesh);
        }
        if let Some(w) = &self.source.skeletal_weights {
            hash_weights(&mut h, w);
        }
        let clip_hash = hex::encode(h.finalize());

        let mut h = Sha256::new();
        if let Some(w) = &self.source.part_weights {
            hash_weights(&mut h, w);
        }
        hash_mesh(&mut h, &self.target.mesh);
        hash_weights(&mut h, &self.target_weights);
        Ok(CacheKey {
            clip: clip_hash,
            weights: hex::encode(h.finalize()),
        })
    }

    /// Skins the clip and transfers every frame, reusing a cached result when
    /// neither the motion nor the weights changed.
    pub fn run_motrans(&mut self) -> Result<MotransOutcome, PipelineError> {
        let key = self.cache_key()?;
        if let Some(hit) = self.cache.get(&key) {
            let result = hit.clone();
            self.latest = Some(key);
            self.stage = self.stage.max(Stage::MoTrans);
            return Ok(MotransOutcome { result, cache_hit: true });
        }
        let result = Arc::new(self.compute_motrans(key.clone())?);
        self.install_result(result.clone());
        Ok(MotransOutcome {
            result,
            cache_hit: false,
        })
    }

    /// Runs the transfer without touching the project, for callers that
    /// compute off a lock and install the result afterwards.
    pub fn compute_motrans(&self, key: CacheKey) -> Result<MotransResult, PipelineError> {
        let clip = self.clip.as_ref().ok_or(PipelineError::NoClip)?;
        let (mesh, skeletal, transfer) = match (&self.source.mesh, &self.source.skeletal_weights, self.source.transfer_weights()) {
            (Some(m), Some(s), Some(t)) => (m, s, t),
            _ => return Err(PipelineError::NoClip),
        };
        let source_frames = anim::skin_clip(clip, mesh, skeletal).map_err(|source| PipelineError::Clip {
            what: "skinning the clip",
            source,
        })?;
        let session = TransferSession::new(mesh, transfer.clone(), &self.target.mesh, self.target_weights.clone())?;
        let transferred = retarget::transfer_clip(&session, &source_frames)?;
        let (frames, diagnostics) = transferred.into_iter().map(|f| (f.mesh, f.diagnostics)).unzip();
        Ok(MotransResult {
            key,
            frame_rate: clip.frame_rate(),
            frames,
            diagnostics,
        })
    }

    pub fn install_result(&mut self, result: Arc<MotransResult>) {
        self.latest = Some(result.key.clone());
        self.cache.insert(result.key.clone(), result);
        self.stage = self.stage.max(Stage::MoTrans);
    }

    /// The most recent transfer, if it still matches the current state.
    pub fn latest_result(&self) -> Option<Arc<MotransResult>> {
        let key = self.latest.as_ref()?;
        if self.cache_key().ok().as_ref() != Some(key) {
            return None;
        }
        self.cache.get(key).cloned()
    }

    pub fn cached_result(&self, key: &CacheKey) -> Option<Arc<MotransResult>> {
        self.cache.get(key).cloned()
    }

    pub fn frame(&self, index: usize) -> Result<Mesh, PipelineError> {
        let result = self.latest_result().ok_or(PipelineError::NoResults)?;
        result.frames.get(index).cloned().ok_or(PipelineError::FrameOutOfRange {
            frame: index,
            count: result.frames.len(),
        })
    }

    /// Vertices carrying `label` on the human and on the target.
    pub fn highlight_correspondence(&self, label: PartLabel) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
        let k = self.part_count();
        if label.0 >= k {
            return Err(PipelineError::LabelOutOfRange { label: label.0, part_count: k });
        }
        let source = self
            .source
            .transfer_weights()
            .map(|w| skinning::part_vertex_sets(w).get(label).to_vec())
            .unwrap_or_default();
        let target = skinning::part_vertex_sets(&self.target_weights).get(label).to_vec();
        Ok((source, target))
    }

    /// Palette plus per-vertex colors for the human (if present) and target.
    pub fn label_colors(&self) -> (LabelPalette, Option<Vec<[u8; 3]>>, Vec<[u8; 3]>) {
        let (palette, target) = palette::label_colors(&self.target_weights);
        let source = self.source.transfer_weights().map(|w| palette::label_colors(w).1);
        (palette, source, target)
    }

    pub fn export(&mut self, dir: &std::path::Path) -> Result<Manifest, PipelineError> {
        let result = self.latest_result().ok_or(PipelineError::NoResults)?;
        let manifest = export::export_results(&result, dir)?;
        self.stage = Stage::Results;
        Ok(manifest)
    }
}
