//! Directory-per-project persistence.
//!
//! ```text
//! <root>/<id>/project.json      id, stage, edit history
//! <root>/<id>/source/           mesh.obj, skeletal_weights.json,
//!                               part_weights.json, clip.json, video.json
//! <root>/<id>/target/           mesh.obj, weights.json
//! ```
//!
//! Inputs are stored as uploaded (after canonicalization) and never
//! rewritten by edits; loading replays the history over them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HistoryEntry, PipelineError, Project, SourceUpload, Stage, TargetUpload};
use crate::anim::mocap::MoCapRequest;
use crate::mesh;

const PROJECT_FILE: &str = "project.json";

#[derive(Debug, Serialize, Deserialize)]
struct ProjectFile {
    id: String,
    stage: Stage,
    history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone)]
pub struct ProjectStore {
    root: PathBuf,
}

/// Ids are used as directory names, so only `[A-Za-z0-9_-]` is allowed.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>, PipelineError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(PipelineError::io(path, e)),
    }
}

fn read_required(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn corrupt(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| PipelineError::io(&root, e))?;
        Ok(ProjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, id: &str) -> Result<PathBuf, PipelineError> {
        if !valid_id(id) {
            return Err(PipelineError::InvalidId(id.to_string()));
        }
        Ok(self.root.join(id))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.project_dir(id).map(|d| d.join(PROJECT_FILE).is_file()).unwrap_or(false)
    }

    /// Sorted ids of all stored projects.
    pub fn list(&self) -> Result<Vec<String>, PipelineError> {
        let entries = fs::read_dir(&self.root).map_err(|e| PipelineError::io(&self.root, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| PipelineError::io(&self.root, e))?;
            if let Some(name) = entry.file_name().to_str() {
                if self.exists(name) {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// First unused id of the form `p0001`.
    pub fn next_id(&self) -> Result<String, PipelineError> {
        let taken = self.list()?;
        Ok((1..)
            .map(|n| format!("p{n:04}"))
            .find(|id| !taken.contains(id) && !self.root.join(id).exists())
            .expect("unbounded range"))
    }

    /// Writes the inputs and the project state.
    pub fn save(&self, project: &Project) -> Result<(), PipelineError> {
        let dir = self.project_dir(project.id())?;
        let source_dir = dir.join("source");
        let target_dir = dir.join("target");
        for d in [&source_dir, &target_dir] {
            fs::create_dir_all(d).map_err(|e| PipelineError::io(d, e))?;
        }

        let source = project.source();
        let optional: [(&str, Option<String>); 5] = [
            ("mesh.obj", source.mesh.as_ref().map(mesh::serialize_obj_exact)),
            (
                "skeletal_weights.json",
                source.skeletal_weights.as_ref().map(|w| w.to_json()).transpose().map_err(|e| corrupt(&source_dir, e))?,
            ),
            (
                "part_weights.json",
                source.part_weights.as_ref().map(|w| w.to_json()).transpose().map_err(|e| corrupt(&source_dir, e))?,
            ),
            ("clip.json", source.clip.as_ref().map(|c| c.to_json())),
            (
                "video.json",
                source.video.as_ref().map(|v| serde_json::to_string(v).expect("video serialize")),
            ),
        ];
        for (name, text) in optional {
            let path = source_dir.join(name);
            match text {
                Some(text) => write_file(&path, &text)?,
                None if path.exists() => fs::remove_file(&path).map_err(|e| PipelineError::io(&path, e))?,
                None => {}
            }
        }

        let target = project.target();
        write_file(&target_dir.join("mesh.obj"), &mesh::serialize_obj_exact(&target.mesh))?;
        let weights = target.weights.to_json().map_err(|e| corrupt(&target_dir, e))?;
        write_file(&target_dir.join("weights.json"), &weights)?;

        self.save_state(project)
    }

    /// Writes only `project.json`; enough after edits and stage changes.
    pub fn save_state(&self, project: &Project) -> Result<(), PipelineError> {
        let dir = self.project_dir(project.id())?;
        let file = ProjectFile {
            id: project.id().to_string(),
            stage: project.stage(),
            history: project.history().to_vec(),
        };
        write_file(&dir.join(PROJECT_FILE), &serde_json::to_string_pretty(&file).expect("project serialize"))
    }

    /// Rebuilds a project from its inputs and history.
    pub fn load(&self, id: &str) -> Result<Project, PipelineError> {
        let dir = self.project_dir(id)?;
        let state_path = dir.join(PROJECT_FILE);
        if !state_path.is_file() {
            return Err(PipelineError::NotFound(id.to_string()));
        }
        let state: ProjectFile =
            serde_json::from_str(&read_required(&state_path)?).map_err(|e| corrupt(&state_path, e))?;

        let source_dir = dir.join("source");
        let video_path = source_dir.join("video.json");
        let video: Option<MoCapRequest> = read_optional(&video_path)?
            .map(|t| serde_json::from_str(&t).map_err(|e| corrupt(&video_path, e)))
            .transpose()?;
        let source = SourceUpload {
            mesh_obj: read_optional(&source_dir.join("mesh.obj"))?,
            skeletal_weights_json: read_optional(&source_dir.join("skeletal_weights.json"))?,
            part_weights_json: read_optional(&source_dir.join("part_weights.json"))?,
            clip_json: read_optional(&source_dir.join("clip.json"))?,
            video,
        }
        .parse_with(false)?;
        let target_dir = dir.join("target");
        let target = TargetUpload {
            mesh_obj: read_required(&target_dir.join("mesh.obj"))?,
            weights_json: read_required(&target_dir.join("weights.json"))?,
        }
        .parse_with(false)?;

        let mut project = Project::from_bundles(state.id, source, target)?;
        for entry in &state.history {
            project.apply_edit(entry)?;
        }
        project.stage = state.stage;
        Ok(project)
    }
}
