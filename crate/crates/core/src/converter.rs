//! Color-weight converter.
//!
//! When the user paints vertex `v` with part `k`, its new weight row is a
//! blend of the rows of the vertices currently labelled `k`
//! (`V_k = { u | argmax(W_u) = k }`):
//!
//! ```text
//! W~_v = sum_i alpha_i W_i         alpha_i = gamma_i * eta_i
//! gamma_i = 1 / d(x_v, x_i)^p      (inverse distance)
//! eta_i   = f_h(x_i)               (Gaussian KDE of V_k evaluated at x_i)
//! W_v = W~_v / ||W~_v||_1
//! ```
//!
//! The sum-to-one normalization keeps rows on the simplex that LBS needs. The
//! KDE is the standard isotropic 3-D Gaussian with a Scott bandwidth,
//! `h = n^(-1/7) * mean(sigma_x, sigma_y, sigma_z)`, floored at a fraction of
//! the mesh bounding-box diagonal.
//!
//! Painting a part nobody currently carries zeroes that part's entry in the
//! row and renormalizes.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Mesh, Vec3};
use crate::skinning::{self, PartLabel, PartSets, SkinningError, SkinningWeights};

/// Members closer than this to the query are treated as coincident.
pub const SNAP_DISTANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ConverterError {
    #[error("edit command selects no vertices")]
    EmptySelection,
    #[error("vertex {vertex} out of range for {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("label {label} out of range for {part_count} parts")]
    LabelOutOfRange { label: usize, part_count: usize },
    #[error("density estimate needs at least one point")]
    EmptyPoints,
    #[error("bandwidth collapsed to zero (all points coincide and the reference length is zero)")]
    ZeroBandwidth,
    #[error("invalid converter config: {0}")]
    InvalidConfig(String),
    #[error("vertex {0}: removing the uncovered part leaves an all-zero row")]
    DegenerateRow(usize),
    #[error(transparent)]
    Skinning(#[from] SkinningError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterConfig {
    /// Power `p` of the inverse distance term.
    pub idw_power: f64,
    /// Lower bound on the KDE bandwidth as a fraction of the mesh bounding-box
    /// diagonal.
    pub bandwidth_floor: f64,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        ConverterConfig {
            idw_power: 1.0,
            bandwidth_floor: 1e-3,
        }
    }
}

impl ConverterConfig {
    pub fn validate(&self) -> Result<(), ConverterError> {
        if !(self.idw_power > 0.0 && self.idw_power.is_finite()) {
            return Err(ConverterError::InvalidConfig(format!(
                "idw power must be positive, got {}",
                self.idw_power
            )));
        }
        if !(self.bandwidth_floor > 0.0 && self.bandwidth_floor.is_finite()) {
            return Err(ConverterError::InvalidConfig(format!(
                "bandwidth floor must be positive, got {}",
                self.bandwidth_floor
            )));
        }
        Ok(())
    }
}

/// One weight-editor action: paint `vertex_ids` with `target_label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCommand {
    #[serde(rename = "vertices")]
    pub vertex_ids: BTreeSet<usize>,
    #[serde(rename = "label")]
    pub target_label: PartLabel,
}

impl EditCommand {
    pub fn new(vertex_ids: impl IntoIterator<Item = usize>, target_label: usize) -> Self {
        EditCommand {
            vertex_ids: vertex_ids.into_iter().collect(),
            target_label: PartLabel(target_label),
        }
    }

    pub fn validate(&self, vertex_count: usize, part_count: usize) -> Result<(), ConverterError> {
        if self.vertex_ids.is_empty() {
            return Err(ConverterError::EmptySelection);
        }
        if let Some(&vertex) = self.vertex_ids.iter().next_back().filter(|&&v| v >= vertex_count) {
            return Err(ConverterError::VertexOutOfRange {
                vertex,
                count: vertex_count,
            });
        }
        if self.target_label.0 >= part_count {
            return Err(ConverterError::LabelOutOfRange {
                label: self.target_label.0,
                part_count,
            });
        }
        Ok(())
    }
}

/// Inverse-distance term of a single member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdwWeight {
    Weight(f64),
    /// Query coincides with the member.
    Snap,
}

pub fn idw_weight(query: &Vec3, member: &Vec3, config: &ConverterConfig) -> IdwWeight {
    let d = (query - member).norm();
    if d < SNAP_DISTANCE {
        IdwWeight::Snap
    } else {
        IdwWeight::Weight(d.powf(-config.idw_power))
    }
}

/// Scott's rule for 3-D data, before flooring. Uses sample standard
/// deviations; a single point has zero spread.
pub fn scott_bandwidth(points: &[Vec3]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mean: Vec3 = points.iter().sum::<Vec3>() / n as f64;
    let mut sq = Vec3::zeros();
    for p in points {
        let d = p - mean;
        sq += d.component_mul(&d);
    }
    let var = sq / (n as f64 - 1.0);
    let sigma = (var.x.sqrt() + var.y.sqrt() + var.z.sqrt()) / 3.0;
    (n as f64).powf(-1.0 / 7.0) * sigma
}

/// Gaussian kernel density estimate over a fixed point set.
#[derive(Debug, Clone)]
pub struct Kde<'a> {
    points: &'a [Vec3],
    bandwidth: f64,
    inv_two_h2: f64,
    normalizer: f64,
}

impl<'a> Kde<'a> {
    /// `floor_length` is the absolute lower bound on the bandwidth.
    pub fn new(points: &'a [Vec3], floor_length: f64) -> Result<Self, ConverterError> {
        if points.is_empty() {
            return Err(ConverterError::EmptyPoints);
        }
        let bandwidth = scott_bandwidth(points).max(floor_length);
        if !(bandwidth > 0.0) {
            return Err(ConverterError::ZeroBandwidth);
        }
        let n = points.len() as f64;
        Ok(Kde {
            points,
            bandwidth,
            inv_two_h2: 1.0 / (2.0 * bandwidth * bandwidth),
            normalizer: 1.0 / (n * bandwidth.powi(3) * (2.0 * PI).powf(1.5)),
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, query: &Vec3) -> f64 {
        let sum: f64 = self
            .points
            .iter()
            .map(|p| (-(query - p).norm_squared() * self.inv_two_h2).exp())
            .sum();
        self.normalizer * sum
    }
}

/// Density of `points` at `query`. The bandwidth floor is
/// `config.bandwidth_floor * reference_diagonal`.
pub fn kde_density(
    points: &[Vec3],
    query: &Vec3,
    config: &ConverterConfig,
    reference_diagonal: f64,
) -> Result<f64, ConverterError> {
    Ok(Kde::new(points, config.bandwidth_floor * reference_diagonal)?.density(query))
}

/// Labels whose argmax vertex set is non-empty.
pub fn coverage_map(weights: &SkinningWeights) -> BTreeSet<PartLabel> {
    skinning::part_vertex_sets(weights).covered()
}

/// Applies one paint action and returns the new weights. Only rows named in
/// the command change.
pub fn convert_edit(
    mesh: &Mesh,
    weights: &SkinningWeights,
    command: &EditCommand,
    config: &ConverterConfig,
) -> Result<SkinningWeights, ConverterError> {
    config.validate()?;
    weights.ensure_bound_to(mesh)?;
    command.validate(mesh.vertex_count(), weights.part_count())?;

    let sets = skinning::part_vertex_sets(weights);
    let members = evidence_members(&sets, command);
    let k = command.target_label.0;
    let mut out = weights.clone();

    if members.is_empty() {
        for &v in &command.vertex_ids {
            let row = out.row_mut(v);
            row[k] = 0.0;
            skinning::renormalize_row(row).map_err(|_| ConverterError::DegenerateRow(v))?;
        }
        return Ok(out);
    }

    let positions: Vec<Vec3> = members.iter().map(|&i| mesh.vertices[i]).collect();
    let kde = Kde::new(&positions, config.bandwidth_floor * mesh.diagonal())?;
    let density: Vec<f64> = positions.par_iter().map(|x| kde.density(x)).collect();

    let rows: Vec<(usize, Vec<f64>)> = command
        .vertex_ids
        .par_iter()
        .map(|&v| (v, blend_row(mesh.vertices[v], &members, &positions, &density, weights, config)))
        .collect();
    for (v, row) in rows {
        out.row_mut(v).copy_from_slice(&row);
    }
    Ok(out)
}

/// `V_k` from the pre-edit weights, minus the vertices being edited, in
/// ascending vertex order.
fn evidence_members(sets: &PartSets, command: &EditCommand) -> Vec<usize> {
    sets.get(command.target_label)
        .iter()
        .copied()
        .filter(|v| !command.vertex_ids.contains(v))
        .collect()
}

fn blend_row(
    query: Vec3,
    members: &[usize],
    positions: &[Vec3],
    density: &[f64],
    weights: &SkinningWeights,
    config: &ConverterConfig,
) -> Vec<f64> {
    let mut blended = vec![0.0; weights.part_count()];
    let mut snap: Option<(f64, usize)> = None;
    for (slot, (&member, x)) in members.iter().zip(positions).enumerate() {
        match idw_weight(&query, x, config) {
            IdwWeight::Snap => {
                let d = (query - x).norm();
                if snap.is_none_or(|(best, _)| d < best) {
                    snap = Some((d, member));
                }
            }
            IdwWeight::Weight(gamma) => {
                let alpha = gamma * density[slot];
                for (b, w) in blended.iter_mut().zip(weights.row(member)) {
                    *b += alpha * w;
                }
            }
        }
    }
    if let Some((_, member)) = snap {
        return weights.row(member).to_vec();
    }
    let norm: f64 = blended.iter().sum();
    for b in blended.iter_mut() {
        *b /= norm;
    }
    blended
}
