//! Skinning weights and linear blend skinning.
//!
//! A weight row is a point on the probability simplex: entries in `[0, 1]`
//! summing to one. Row `v` tells how strongly each of the `K` parts drags
//! vertex `v` along.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Mesh, Vec3};

/// Tolerance for the simplex constraint on stored rows.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
/// Rows written to JSON must sum to one within this.
pub const WRITE_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_PART_COUNT: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum SkinningError {
    #[error("row {row} has {found} entries, expected {expected}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("part count must be positive")]
    NoParts,
    #[error("weights have {weights} rows but mesh has {vertices} vertices")]
    VertexCountMismatch { weights: usize, vertices: usize },
    #[error("weights have {weights} parts but transforms have {transforms}")]
    PartCountMismatch { weights: usize, transforms: usize },
    #[error("vertex {0} has a zero weight row")]
    DegenerateRow(usize),
    #[error("vertex {vertex} out of range for {count} rows")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("label {label} out of range for {part_count} parts")]
    LabelOutOfRange { label: usize, part_count: usize },
    #[error("row {row} sums to {sum}, writers require 1 within 1e-9")]
    NotNormalized { row: usize, sum: f64 },
    #[error("invalid weights JSON: {0}")]
    Json(String),
}

/// Index of a deformation part, `0..K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartLabel(pub usize);

impl PartLabel {
    pub fn checked(value: usize, part_count: usize) -> Result<Self, SkinningError> {
        if value < part_count {
            Ok(PartLabel(value))
        } else {
            Err(SkinningError::LabelOutOfRange {
                label: value,
                part_count,
            })
        }
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PartLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Dense `V x K` weight matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningWeights {
    part_count: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    part_count: usize,
    weights: Vec<Vec<f64>>,
}

impl SkinningWeights {
    pub fn from_rows(part_count: usize, rows: Vec<Vec<f64>>) -> Result<Self, SkinningError> {
        if part_count == 0 {
            return Err(SkinningError::NoParts);
        }
        let mut data = Vec::with_capacity(rows.len() * part_count);
        for (row, values) in rows.into_iter().enumerate() {
            if values.len() != part_count {
                return Err(SkinningError::RowLength {
                    row,
                    expected: part_count,
                    found: values.len(),
                });
            }
            data.extend(values);
        }
        Ok(SkinningWeights { part_count, data })
    }

    pub fn from_flat(part_count: usize, data: Vec<f64>) -> Result<Self, SkinningError> {
        if part_count == 0 {
            return Err(SkinningError::NoParts);
        }
        if !data.len().is_multiple_of(part_count) {
            return Err(SkinningError::RowLength {
                row: data.len() / part_count,
                expected: part_count,
                found: data.len() % part_count,
            });
        }
        Ok(SkinningWeights { part_count, data })
    }

    /// One-hot rows from a label per vertex.
    pub fn one_hot(part_count: usize, labels: &[usize]) -> Result<Self, SkinningError> {
        let mut data = vec![0.0; labels.len() * part_count];
        for (v, &label) in labels.iter().enumerate() {
            PartLabel::checked(label, part_count)?;
            data[v * part_count + label] = 1.0;
        }
        SkinningWeights::from_flat(part_count, data)
    }

    pub fn part_count(&self) -> usize {
        self.part_count
    }

    pub fn vertex_count(&self) -> usize {
        self.data.len() / self.part_count
    }

    pub fn row(&self, vertex: usize) -> &[f64] {
        &self.data[vertex * self.part_count..(vertex + 1) * self.part_count]
    }

    pub fn row_mut(&mut self, vertex: usize) -> &mut [f64] {
        &mut self.data[vertex * self.part_count..(vertex + 1) * self.part_count]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.part_count)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, vertex: usize, part: usize) -> f64 {
        self.data[vertex * self.part_count + part]
    }

    pub fn ensure_bound_to(&self, mesh: &Mesh) -> Result<(), SkinningError> {
        if self.vertex_count() != mesh.vertex_count() {
            return Err(SkinningError::VertexCountMismatch {
                weights: self.vertex_count(),
                vertices: mesh.vertex_count(),
            });
        }
        Ok(())
    }

    /// Total weight mass of each part column.
    pub fn part_masses(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.part_count];
        for row in self.rows() {
            for (m, w) in mass.iter_mut().zip(row) {
                *m += w;
            }
        }
        mass
    }

    pub fn validate(&self) -> WeightReport {
        validate_weights(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SkinningError> {
        let file: WeightsFile = serde_json::from_str(text).map_err(|e| SkinningError::Json(e.to_string()))?;
        SkinningWeights::from_rows(file.part_count, file.weights)
    }

    /// Serializes to the weights JSON schema. Fails if any row is not
    /// L1-normalized within [`WRITE_TOLERANCE`].
    pub fn to_json(&self) -> Result<String, SkinningError> {
        for (row, values) in self.rows().enumerate() {
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > WRITE_TOLERANCE {
                return Err(SkinningError::NotNormalized { row, sum });
            }
        }
        let file = WeightsFile {
            part_count: self.part_count,
            weights: self.rows().map(<[f64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&file).expect("weights serialize"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Negative { part: usize, value: f64 },
    AboveOne { part: usize, value: f64 },
    NotFinite { part: usize },
    L1Norm { sum: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowViolation {
    pub vertex: usize,
    pub violations: Vec<Violation>,
}

/// Rows that break the simplex constraint. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WeightReport {
    pub rows: Vec<RowViolation>,
}

impl WeightReport {
    pub fn is_valid(&self) -> bool {
        self.rows.is_empty()
    }
}

impl fmt::Display for WeightReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rows.is_empty() {
            return write!(f, "weights valid");
        }
        write!(f, "{} invalid weight row(s):", self.rows.len())?;
        for row in self.rows.iter().take(8) {
            write!(f, " row {}:", row.vertex)?;
            for v in &row.violations {
                match v {
                    Violation::Negative { part, value } => write!(f, " [{part}]={value} < 0")?,
                    Violation::AboveOne { part, value } => write!(f, " [{part}]={value} > 1")?,
                    Violation::NotFinite { part } => write!(f, " [{part}] not finite")?,
                    Violation::L1Norm { sum } => write!(f, " sum={sum}")?,
                }
            }
            write!(f, ";")?;
        }
        if self.rows.len() > 8 {
            write!(f, " ...")?;
        }
        Ok(())
    }
}

pub fn validate_weights(weights: &SkinningWeights) -> WeightReport {
    let mut report = WeightReport::default();
    for (vertex, row) in weights.rows().enumerate() {
        let mut violations = Vec::new();
        for (part, &value) in row.iter().enumerate() {
            if !value.is_finite() {
                violations.push(Violation::NotFinite { part });
            } else if value < 0.0 {
                violations.push(Violation::Negative { part, value });
            } else if value > 1.0 + SIMPLEX_TOLERANCE {
                violations.push(Violation::AboveOne { part, value });
            }
        }
        let sum: f64 = row.iter().sum();
        if !((sum - 1.0).abs() <= SIMPLEX_TOLERANCE) {
            violations.push(Violation::L1Norm { sum });
        }
        if !violations.is_empty() {
            report.rows.push(RowViolation { vertex, violations });
        }
    }
    report
}

/// Part with the largest weight; ties go to the lowest index.
pub fn argmax_label(weights: &SkinningWeights, vertex: usize) -> PartLabel {
    argmax(weights.row(vertex))
}

pub(crate) fn argmax(row: &[f64]) -> PartLabel {
    let mut best = 0;
    for (k, &w) in row.iter().enumerate().skip(1) {
        if w > row[best] {
            best = k;
        }
    }
    PartLabel(best)
}

/// Vertex sets `V_k = { u | argmax(W_u) = k }`, indexed by part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartSets {
    sets: Vec<Vec<usize>>,
}

impl PartSets {
    pub fn get(&self, label: PartLabel) -> &[usize] {
        &self.sets[label.0]
    }

    pub fn part_count(&self) -> usize {
        self.sets.len()
    }

    pub fn is_covered(&self, label: PartLabel) -> bool {
        !self.sets[label.0].is_empty()
    }

    pub fn covered(&self) -> BTreeSet<PartLabel> {
        self.iter().filter(|(_, s)| !s.is_empty()).map(|(k, _)| k).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PartLabel, &[usize])> + '_ {
        self.sets.iter().enumerate().map(|(k, s)| (PartLabel(k), s.as_slice()))
    }
}

pub fn part_vertex_sets(weights: &SkinningWeights) -> PartSets {
    let mut sets = vec![Vec::new(); weights.part_count()];
    for (v, row) in weights.rows().enumerate() {
        sets[argmax(row).0].push(v);
    }
    PartSets { sets }
}

/// Divides every row by its L1 norm.
pub fn renormalize(weights: &SkinningWeights) -> Result<SkinningWeights, SkinningError> {
    let mut out = weights.clone();
    for v in 0..out.vertex_count() {
        renormalize_row(out.row_mut(v)).map_err(|_| SkinningError::DegenerateRow(v))?;
    }
    Ok(out)
}

pub(crate) fn renormalize_row(row: &mut [f64]) -> Result<(), ()> {
    let norm: f64 = row.iter().map(|w| w.abs()).sum();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(());
    }
    for w in row.iter_mut() {
        *w /= norm;
    }
    Ok(())
}

/// Per-part rigid transforms for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PartTransformSet {
    pub frame_index: usize,
    pub rotations: Vec<UnitQuaternion<f64>>,
    pub translations: Vec<Vec3>,
}

impl PartTransformSet {
    pub fn identity(part_count: usize, frame_index: usize) -> Self {
        PartTransformSet {
            frame_index,
            rotations: vec![UnitQuaternion::identity(); part_count],
            translations: vec![Vec3::zeros(); part_count],
        }
    }

    pub fn part_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotation_matrices(&self) -> Vec<Matrix3<f64>> {
        self.rotations.iter().map(|q| q.to_rotation_matrix().into_inner()).collect()
    }

    /// `R_k p + t_k`.
    pub fn transform_point(&self, part: usize, p: &Vec3) -> Vec3 {
        self.rotations[part] * p + self.translations[part]
    }
}

/// Linear blend skinning: `y' = sum_k W[j,k] (R_k y + t_k)`.
///
/// Evaluated as `y + sum_k W[j,k] ((R_k - I) y + t_k)`, which is the same
/// thing for affine rows and reproduces the input bit-for-bit under identity
/// transforms.
pub fn lbs_deform(mesh: &Mesh, weights: &SkinningWeights, transforms: &PartTransformSet) -> Result<Mesh, SkinningError> {
    weights.ensure_bound_to(mesh)?;
    if transforms.part_count() != weights.part_count() || transforms.translations.len() != weights.part_count() {
        return Err(SkinningError::PartCountMismatch {
            weights: weights.part_count(),
            transforms: transforms.part_count(),
        });
    }
    let offsets: Vec<Matrix3<f64>> = transforms
        .rotation_matrices()
        .into_iter()
        .map(|r| r - Matrix3::identity())
        .collect();
    let vertices = mesh
        .vertices
        .iter()
        .zip(weights.rows())
        .map(|(y, row)| {
            let mut disp = Vec3::zeros();
            for (k, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    disp += w * (offsets[k] * y + transforms.translations[k]);
                }
            }
            y + disp
        })
        .collect();
    Ok(mesh.with_vertices(vertices))
}
