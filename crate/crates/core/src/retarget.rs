//! Frame-by-frame motion transfer between two skinned characters.
//!
//! For every frame the source character's per-part rigid motion is estimated
//! with a weighted Procrustes (Kabsch) fit against its rest pose. The target
//! then moves each part about its own part centroid:
//!
//! ```text
//! y'_j = sum_k W_T[j,k] (R_k (y_j - cT_k) + cT_k + dc_k)
//! dc_k = R_k cH_k + t_k - cH_k
//! ```
//!
//! where `cT_k` / `cH_k` are the mass-weighted rest centroids of part `k` on
//! the target and source, and `dc_k` is the displacement of the source part
//! centroid. Both characters live in their normalized frames (unit height,
//! centroid at the origin), so `dc_k` is already expressed relative to body
//! height; mapping the result back through the target's normalization record
//! is what applies the target/source height ratio.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{self, Mesh, MeshError, NormalizationRecord, Vec3};
use crate::skinning::{PartTransformSet, SkinningError, SkinningWeights};

/// Parts lighter than this fraction of the total weight mass are degenerate.
pub const DEFAULT_MASS_EPSILON: f64 = 1e-6;
/// Second singular value of the cross-covariance, relative to the first,
/// below which a part is too thin (collinear or a point) to orient.
pub const CONDITION_EPSILON: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum RetargetError {
    #[error("rest mesh has {rest} vertices but posed mesh has {posed}")]
    VertexCountMismatch { rest: usize, posed: usize },
    #[error("posed mesh connectivity differs from the rest mesh")]
    ConnectivityMismatch,
    #[error("source has {source_parts} parts but target has {target_parts}")]
    PartCountMismatch { source_parts: usize, target_parts: usize },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<RetargetError>,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Skinning(#[from] SkinningError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartFit {
    /// Weighted RMS distance between the fitted and posed vertices.
    pub residual: f64,
    pub mass: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub parts: Vec<PartFit>,
}

impl FitDiagnostics {
    pub fn max_residual(&self) -> f64 {
        self.parts.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

/// Weighted rigid fit of every part of `rest` onto `posed`.
pub fn fit_part_transforms(
    rest: &Mesh,
    posed: &Mesh,
    weights: &SkinningWeights,
) -> Result<(PartTransformSet, FitDiagnostics), RetargetError> {
    fit_part_transforms_with(rest, posed, weights, DEFAULT_MASS_EPSILON)
}

pub fn fit_part_transforms_with(
    rest: &Mesh,
    posed: &Mesh,
    weights: &SkinningWeights,
    mass_epsilon: f64,
) -> Result<(PartTransformSet, FitDiagnostics), RetargetError> {
    if rest.vertex_count() != posed.vertex_count() {
        return Err(RetargetError::VertexCountMismatch {
            rest: rest.vertex_count(),
            posed: posed.vertex_count(),
        });
    }
    weights.ensure_bound_to(rest)?;

    let part_count = weights.part_count();
    let masses = weights.part_masses();
    let total: f64 = masses.iter().sum();
    let mut transforms = PartTransformSet::identity(part_count, 0);
    let mut parts = Vec::with_capacity(part_count);

    for (k, &mass) in masses.iter().enumerate() {
        let fit = if mass > 0.0 && mass >= mass_epsilon * total {
            weighted_kabsch(&rest.vertices, &posed.vertices, |i| weights.get(i, k), mass)
        } else {
            None
        };
        match fit {
            Some((rotation, translation)) => {
                let residual = weighted_rms(&rest.vertices, &posed.vertices, |i| weights.get(i, k), mass, &rotation, &translation);
                transforms.rotations[k] = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation));
                transforms.translations[k] = translation;
                parts.push(PartFit {
                    residual,
                    mass,
                    degenerate: false,
                });
            }
            None => {
                let residual = if mass > 0.0 {
                    weighted_rms(&rest.vertices, &posed.vertices, |i| weights.get(i, k), mass, &Matrix3::identity(), &Vec3::zeros())
                } else {
                    0.0
                };
                parts.push(PartFit {
                    residual,
                    mass,
                    degenerate: true,
                });
            }
        }
    }
    Ok((transforms, FitDiagnostics { parts }))
}

/// Closed-form minimizer of `sum_i w_i |R a_i + t - b_i|^2` with `det R = +1`.
/// `None` when the weighted point cloud cannot fix a rotation.
fn weighted_kabsch(
    from: &[Vec3],
    to: &[Vec3],
    weight: impl Fn(usize) -> f64,
    mass: f64,
) -> Option<(Matrix3<f64>, Vec3)> {
    let mut c_from = Vec3::zeros();
    let mut c_to = Vec3::zeros();
    for (i, (a, b)) in from.iter().zip(to).enumerate() {
        let w = weight(i);
        if w != 0.0 {
            c_from += w * a;
            c_to += w * b;
        }
    }
    c_from /= mass;
    c_to /= mass;

    let mut cov = Matrix3::zeros();
    for (i, (a, b)) in from.iter().zip(to).enumerate() {
        let w = weight(i);
        if w != 0.0 {
            cov += w * (a - c_from) * (b - c_to).transpose();
        }
    }

    // Shape of the source part alone decides conditioning; the posed copy of
    // a rigid part has the same spread.
    let mut spread = Matrix3::zeros();
    for (i, a) in from.iter().enumerate() {
        let w = weight(i);
        if w != 0.0 {
            let d = a - c_from;
            spread += w * d * d.transpose();
        }
    }
    let shape = SVD::new(spread, false, false).singular_values;
    if !(shape[0] > 1e-24) || shape[1] < CONDITION_EPSILON * shape[0] {
        return None;
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // singular values are sorted, so index 2 is the weakest direction
        correction[(2, 2)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = c_to - rotation * c_from;
    Some((rotation, translation))
}

fn weighted_rms(
    from: &[Vec3],
    to: &[Vec3],
    weight: impl Fn(usize) -> f64,
    mass: f64,
    rotation: &Matrix3<f64>,
    translation: &Vec3,
) -> f64 {
    let sum: f64 = from
        .iter()
        .zip(to)
        .enumerate()
        .map(|(i, (a, b))| weight(i) * (rotation * a + translation - b).norm_squared())
        .sum();
    (sum / mass).sqrt()
}

/// Mass-weighted rest centroid of every part, `None` for massless parts.
pub fn part_centroids(mesh: &Mesh, weights: &SkinningWeights) -> Vec<Option<Vec3>> {
    let k = weights.part_count();
    let mut sums = vec![Vec3::zeros(); k];
    let mut mass = vec![0.0; k];
    for (p, row) in mesh.vertices.iter().zip(weights.rows()) {
        for (part, &w) in row.iter().enumerate() {
            if w != 0.0 {
                sums[part] += w * p;
                mass[part] += w;
            }
        }
    }
    sums.into_iter()
        .zip(mass)
        .map(|(s, m)| (m > 0.0).then(|| s / m))
        .collect()
}

/// Everything that stays fixed while a clip is transferred: both rest
/// characters in their normalized frames and their weights.
#[derive(Debug, Clone)]
pub struct TransferSession {
    source_rest: Mesh,
    target_rest: Mesh,
    source_weights: SkinningWeights,
    target_weights: SkinningWeights,
    source_record: NormalizationRecord,
    target_record: NormalizationRecord,
    scale_ratio: f64,
    source_centroids: Vec<Option<Vec3>>,
    target_centroids: Vec<Option<Vec3>>,
    mass_epsilon: f64,
}

impl TransferSession {
    /// Takes both rest meshes in their original frames.
    pub fn new(
        source_rest: &Mesh,
        source_weights: SkinningWeights,
        target_rest: &Mesh,
        target_weights: SkinningWeights,
    ) -> Result<Self, RetargetError> {
        source_weights.ensure_bound_to(source_rest)?;
        target_weights.ensure_bound_to(target_rest)?;
        if source_weights.part_count() != target_weights.part_count() {
            return Err(RetargetError::PartCountMismatch {
                source_parts: source_weights.part_count(),
                target_parts: target_weights.part_count(),
            });
        }
        let (source_norm, source_record) = mesh::normalize(source_rest)?;
        let (target_norm, target_record) = mesh::normalize(target_rest)?;
        let source_centroids = part_centroids(&source_norm, &source_weights);
        let target_centroids = part_centroids(&target_norm, &target_weights);
        Ok(TransferSession {
            scale_ratio: target_record.original_height() / source_record.original_height(),
            source_rest: source_norm,
            target_rest: target_norm,
            source_weights,
            target_weights,
            source_record,
            target_record,
            source_centroids,
            target_centroids,
            mass_epsilon: DEFAULT_MASS_EPSILON,
        })
    }

    pub fn with_mass_epsilon(mut self, mass_epsilon: f64) -> Self {
        self.mass_epsilon = mass_epsilon;
        self
    }

    pub fn source_rest(&self) -> &Mesh {
        &self.source_rest
    }

    pub fn target_rest(&self) -> &Mesh {
        &self.target_rest
    }

    pub fn source_weights(&self) -> &SkinningWeights {
        &self.source_weights
    }

    pub fn target_weights(&self) -> &SkinningWeights {
        &self.target_weights
    }

    pub fn source_record(&self) -> &NormalizationRecord {
        &self.source_record
    }

    pub fn target_record(&self) -> &NormalizationRecord {
        &self.target_record
    }

    /// Target height over source height, both before normalization.
    pub fn scale_ratio(&self) -> f64 {
        self.scale_ratio
    }

    pub fn part_count(&self) -> usize {
        self.target_weights.part_count()
    }

    /// Fits one posed source frame given in the source's original frame.
    pub fn fit_frame(&self, posed: &Mesh) -> Result<(PartTransformSet, FitDiagnostics), RetargetError> {
        if posed.vertex_count() != self.source_rest.vertex_count() {
            return Err(RetargetError::VertexCountMismatch {
                rest: self.source_rest.vertex_count(),
                posed: posed.vertex_count(),
            });
        }
        if posed.faces != self.source_rest.faces {
            return Err(RetargetError::ConnectivityMismatch);
        }
        let posed = self.source_record.apply_mesh(posed);
        fit_part_transforms_with(&self.source_rest, &posed, &self.source_weights, self.mass_epsilon)
    }
}

/// Articulates the normalized target rest mesh with per-part transforms
/// expressed in the source's normalized frame.
pub fn apply_to_target(session: &TransferSession, transforms: &PartTransformSet) -> Result<Mesh, RetargetError> {
    let k = session.part_count();
    if transforms.part_count() != k || transforms.translations.len() != k {
        return Err(RetargetError::Skinning(SkinningError::PartCountMismatch {
            weights: k,
            transforms: transforms.part_count(),
        }));
    }
    let rotations = transforms.rotation_matrices();
    let offsets: Vec<Matrix3<f64>> = rotations.iter().map(|r| r - Matrix3::identity()).collect();
    let displacement: Vec<Vec3> = (0..k)
        .map(|part| match session.source_centroids[part] {
            Some(c) => rotations[part] * c + transforms.translations[part] - c,
            None => transforms.translations[part],
        })
        .collect();

    let rest = &session.target_rest;
    let vertices = rest
        .vertices
        .iter()
        .zip(session.target_weights.rows())
        .map(|(y, row)| {
            let mut disp = Vec3::zeros();
            for (part, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    let c = session.target_centroids[part].expect("weighted part has mass");
                    disp += w * (offsets[part] * (y - c) + displacement[part]);
                }
            }
            y + disp
        })
        .collect();
    Ok(rest.with_vertices(vertices))
}

/// One transferred frame, in the target's original frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferredFrame {
    pub mesh: Mesh,
    pub transforms: PartTransformSet,
    pub diagnostics: FitDiagnostics,
}

pub fn transfer_frame(session: &TransferSession, index: usize, posed: &Mesh) -> Result<TransferredFrame, RetargetError> {
    let wrap = |e| RetargetError::Frame {
        index,
        source: Box::new(e),
    };
    let (mut transforms, diagnostics) = session.fit_frame(posed).map_err(wrap)?;
    transforms.frame_index = index;
    let normalized = apply_to_target(session, &transforms).map_err(wrap)?;
    Ok(TransferredFrame {
        mesh: session.target_record.invert_mesh(&normalized),
        transforms,
        diagnostics,
    })
}

/// Transfers every frame independently. Errors name the lowest failing frame.
pub fn transfer_clip(session: &TransferSession, source_frames: &[Mesh]) -> Result<Vec<TransferredFrame>, RetargetError> {
    source_frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| transfer_frame(session, i, frame))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
