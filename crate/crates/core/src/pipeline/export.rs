//! OBJ-sequence export with a hashed manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MotransResult, PipelineError};
use crate::mesh;
use crate::retarget::PartFit;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.obj")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frame_rate: f64,
    pub frame_count: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    /// Frame files in order, then the diagnostics file.
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub parts: Vec<PartDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDiagnostics {
    pub part: usize,
    #[serde(flatten)]
    pub fit: PartFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub frames: Vec<FrameDiagnostics>,
}

impl DiagnosticsFile {
    pub fn new<'a>(per_frame: impl IntoIterator<Item = &'a crate::retarget::FitDiagnostics>) -> Self {
        DiagnosticsFile {
            frames: per_frame
                .into_iter()
                .enumerate()
                .map(|(frame, d)| FrameDiagnostics {
                    frame,
                    parts: d
                        .parts
                        .iter()
                        .enumerate()
                        .map(|(part, &fit)| PartDiagnostics { part, fit })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<ManifestFile, PipelineError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| PipelineError::io(path, e))?;
    Ok(ManifestFile {
        name: name.to_string(),
        sha256: sha256_hex(bytes),
    })
}

/// Writes `frame_%04d.obj` files, `diagnostics.json` and `manifest.json`.
/// Output bytes depend only on the result, never on time or paths.
pub fn export_results(result: &MotransResult, dir: &Path) -> Result<Manifest, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files = Vec::with_capacity(result.frames.len() + 1);
    for (i, frame) in result.frames.iter().enumerate() {
        files.push(write(dir, &frame_file_name(i), mesh::serialize_obj(frame).as_bytes())?);
    }
    let diagnostics = DiagnosticsFile::new(&result.diagnostics).to_json();
    files.push(write(dir, DIAGNOSTICS_FILE, diagnostics.as_bytes())?);

    let first = result.frames.first();
    let manifest = Manifest {
        frame_rate: result.frame_rate,
        frame_count: result.frames.len(),
        vertex_count: first.map_or(0, |m| m.vertex_count()),
        face_count: first.map_or(0, |m| m.faces.len()),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialize");
    write(dir, MANIFEST_FILE, text.as_bytes())?;
    Ok(manifest)
}
