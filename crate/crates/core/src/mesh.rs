//! Triangle meshes, Wavefront OBJ I/O and the normalization frame shared by
//! the transfer pipeline.
//!
//! Indices are 0-based everywhere inside the crate. The 1-based convention of
//! OBJ only exists in [`parse_obj`] and [`serialize_obj`].

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face index {index} out of range for {vertex_count} vertices")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    InvalidFace {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}

/// Vertex/face soup with triangulated connectivity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(name: impl Into<String>, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mesh = Mesh {
            name: name.into(),
            vertices,
            faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        for (f, face) in self.faces.iter().enumerate() {
            if let Some(&index) = face.iter().find(|&&i| i >= n) {
                return Err(MeshError::InvalidFace {
                    face: f,
                    index,
                    vertex_count: n,
                });
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same connectivity, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Mesh {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Mesh {
            name: self.name.clone(),
            vertices,
            faces: self.faces.clone(),
        }
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        bounding_box(&self.vertices)
    }

    /// Length of the bounding-box diagonal, 0 for an empty mesh.
    pub fn diagonal(&self) -> f64 {
        self.bounding_box().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    pub fn centroid(&self) -> Option<Vec3> {
        centroid(&self.vertices)
    }
}

pub fn bounding_box(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum: Vec3 = points.iter().sum();
    Some(sum / points.len() as f64)
}

/// Parses ASCII OBJ. Only `v`, `f` and `o` records are interpreted; texture
/// and normal records (and anything else) are skipped. Polygons are
/// fan-triangulated around their first corner.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut name = String::new();
    let mut vertices = Vec::new();
    // (line, resolved 0-based index as i64 so range errors can report it)
    let mut pending: Vec<(usize, [i64; 3])> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut coords = [0.0; 3];
                for c in coords.iter_mut() {
                    let field = fields.next().ok_or_else(|| MeshError::Parse {
                        line,
                        message: "vertex record needs 3 coordinates".into(),
                    })?;
                    *c = field.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid coordinate {field:?}"),
                    })?;
                }
                if coords.iter().any(|c: &f64| !c.is_finite()) {
                    return Err(MeshError::Parse {
                        line,
                        message: "non-finite coordinate".into(),
                    });
                }
                // optional w / vertex colors are ignored
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for field in fields {
                    let head = field.split('/').next().unwrap_or("");
                    let raw_index: i64 = head.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid face index {field:?}"),
                    })?;
                    let resolved = match raw_index {
                        0 => {
                            return Err(MeshError::Parse {
                                line,
                                message: "face index 0 is not valid in OBJ".into(),
                            })
                        }
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    corners.push(resolved);
                }
                if corners.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("face needs at least 3 corners, got {}", corners.len()),
                    });
                }
                for k in 1..corners.len() - 1 {
                    pending.push((line, [corners[0], corners[k], corners[k + 1]]));
                }
            }
            Some("o") if name.is_empty() => {
                name = content[1..].trim().to_string();
            }
            _ => {}
        }
    }

    let n = vertices.len();
    let mut faces = Vec::with_capacity(pending.len());
    for (line, tri) in pending {
        let mut face = [0usize; 3];
        for (slot, &i) in face.iter_mut().zip(tri.iter()) {
            if i < 0 || i as usize >= n {
                // report in the file's 1-based convention
                return Err(MeshError::IndexOutOfRange {
                    line,
                    index: if i < 0 { i } else { i + 1 },
                    vertex_count: n,
                });
            }
            *slot = i as usize;
        }
        faces.push(face);
    }

    Ok(Mesh {
        name,
        vertices,
        faces,
    })
}

/// Writes `o`, `v` (6 decimals) and `f` records.
pub fn serialize_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(32 * (mesh.vertices.len() + mesh.faces.len()) + 16);
    if !mesh.name.is_empty() {
        let _ = writeln!(out, "o {}", mesh.name);
    }
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Like [`serialize_obj`] but with shortest round-trip float formatting, so
/// parsing the output gives back the exact same vertices.
pub fn serialize_obj_exact(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(48 * (mesh.vertices.len() + mesh.faces.len()) + 16);
    if !mesh.name.is_empty() {
        let _ = writeln!(out, "o {}", mesh.name);
    }
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Translation and scale applied by [`normalize`]:
/// `normalized = (original + translation) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub translation: [f64; 3],
    pub scale: f64,
}

impl NormalizationRecord {
    pub fn identity() -> Self {
        NormalizationRecord {
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p + Vec3::from(self.translation)) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale - Vec3::from(self.translation)
    }

    pub fn apply_mesh(&self, mesh: &Mesh) -> Mesh {
        mesh.with_vertices(mesh.vertices.iter().map(|p| self.apply(p)).collect())
    }

    pub fn invert_mesh(&self, mesh: &Mesh) -> Mesh {
        mesh.with_vertices(mesh.vertices.iter().map(|p| self.invert(p)).collect())
    }

    /// Original height of the mesh this record was computed from.
    pub fn original_height(&self) -> f64 {
        1.0 / self.scale
    }
}

/// Moves the vertex centroid to the origin and scales the y extent to 1.
pub fn normalize(mesh: &Mesh) -> Result<(Mesh, NormalizationRecord), MeshError> {
    if mesh.vertices.len() < 2 {
        return Err(MeshError::Degenerate(format!(
            "normalization needs at least 2 vertices, got {}",
            mesh.vertices.len()
        )));
    }
    let (lo, hi) = mesh.bounding_box().expect("non-empty");
    let height = hi.y - lo.y;
    if !(height > 1e-12) {
        return Err(MeshError::Degenerate("mesh has zero height along y".into()));
    }
    let c = mesh.centroid().expect("non-empty");
    let record = NormalizationRecord {
        translation: [-c.x, -c.y, -c.z],
        scale: 1.0 / height,
    };
    Ok((record.apply_mesh(mesh), record))
}

pub fn denormalize(mesh: &Mesh, record: &NormalizationRecord) -> Mesh {
    record.invert_mesh(mesh)
}
