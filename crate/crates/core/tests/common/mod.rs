//! Random generators and independent reference implementations shared by the
//! integration and acceptance tests. The oracles use plain arrays and loops
//! on purpose and never call into the algorithms they check.

#![allow(dead_code, clippy::needless_range_loop)]

use meshmotion::anim::{Joint, LocalPose, Skeleton};
use meshmotion::mesh::{Mesh, Vec3};
use meshmotion::skinning::SkinningWeights;
use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn point(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Uniform random rotation from a normalized Gaussian 4-vector.
pub fn rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    loop {
        let q = nalgebra::Quaternion::new(normal(rng), normal(rng), normal(rng), normal(rng));
        if q.norm() > 1e-3 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

pub fn random_mesh(rng: &mut ChaCha8Rng, vertex_count: usize, face_count: usize) -> Mesh {
    let vertices = (0..vertex_count).map(|_| point(rng, 2.0)).collect();
    let faces = if vertex_count == 0 {
        Vec::new()
    } else {
        (0..face_count)
            .map(|_| {
                [
                    rng.random_range(0..vertex_count),
                    rng.random_range(0..vertex_count),
                    rng.random_range(0..vertex_count),
                ]
            })
            .collect()
    };
    Mesh::new("random", vertices, faces).unwrap()
}

/// Sparse simplex rows with one to four nonzero parts each.
pub fn random_weights(rng: &mut ChaCha8Rng, vertex_count: usize, part_count: usize) -> SkinningWeights {
    let rows = (0..vertex_count)
        .map(|_| {
            let mut row = vec![0.0; part_count];
            let nonzero = rng.random_range(1..=4.min(part_count));
            for _ in 0..nonzero {
                row[rng.random_range(0..part_count)] += rng.random_range(0.05..1.0);
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= sum);
            row
        })
        .collect();
    SkinningWeights::from_rows(part_count, rows).unwrap()
}

pub fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
}

/// Scott bandwidth, 3-D: n^(-1/7) times the mean per-axis sample deviation.
pub fn oracle_bandwidth(points: &[Vec3]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut mean_sigma = 0.0;
    for a in 0..3 {
        let mut mean = 0.0;
        for p in points {
            mean += p[a];
        }
        mean /= n as f64;
        let mut ss = 0.0;
        for p in points {
            ss += (p[a] - mean) * (p[a] - mean);
        }
        mean_sigma += (ss / (n as f64 - 1.0)).sqrt() / 3.0;
    }
    (n as f64).powf(-1.0 / 7.0) * mean_sigma
}

/// Gaussian kernel density, one kernel at a time.
pub fn oracle_density(points: &[Vec3], query: &Vec3, h: f64) -> f64 {
    let n = points.len() as f64;
    let mut total = 0.0;
    for p in points {
        let mut d2 = 0.0;
        for a in 0..3 {
            d2 += (query[a] - p[a]) * (query[a] - p[a]);
        }
        total += (-d2 / (2.0 * h * h)).exp();
    }
    total / (n * h * h * h * (2.0 * std::f64::consts::PI).powf(1.5))
}

fn oracle_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, PartialEq)]
pub enum OracleOutcome {
    Rows(Vec<Vec<f64>>),
    DegenerateRow(usize),
}

/// Straight-line paint action: returns all rows after painting `edited`
/// with `label`.
pub fn oracle_convert(
    positions: &[Vec3],
    rows: &[Vec<f64>],
    edited: &[usize],
    label: usize,
    idw_power: f64,
    floor_fraction: f64,
) -> OracleOutcome {
    let mut out: Vec<Vec<f64>> = rows.to_vec();
    let mut members = Vec::new();
    for u in 0..rows.len() {
        if oracle_argmax(&rows[u]) == label && !edited.contains(&u) {
            members.push(u);
        }
    }

    if members.is_empty() {
        for &v in edited {
            out[v][label] = 0.0;
            let s: f64 = out[v].iter().sum();
            if s <= 0.0 {
                return OracleOutcome::DegenerateRow(v);
            }
            for w in out[v].iter_mut() {
                *w /= s;
            }
        }
        return OracleOutcome::Rows(out);
    }

    let member_points: Vec<Vec3> = members.iter().map(|&u| positions[u]).collect();
    let h = oracle_bandwidth(&member_points).max(floor_fraction * bbox_diagonal(positions));
    let eta: Vec<f64> = member_points.iter().map(|x| oracle_density(&member_points, x, h)).collect();

    for &v in edited {
        let mut snapped: Option<(f64, usize)> = None;
        let mut blended = vec![0.0; rows[v].len()];
        for (i, &u) in members.iter().enumerate() {
            let d = (positions[v] - positions[u]).norm();
            if d < 1e-12 {
                if snapped.is_none() || d < snapped.unwrap().0 {
                    snapped = Some((d, u));
                }
                continue;
            }
            let gamma = 1.0 / d.powf(idw_power);
            for p in 0..blended.len() {
                blended[p] += gamma * eta[i] * rows[u][p];
            }
        }
        out[v] = match snapped {
            Some((_, u)) => rows[u].clone(),
            None => {
                let s: f64 = blended.iter().sum();
                blended.iter().map(|w| w / s).collect()
            }
        };
    }
    OracleOutcome::Rows(out)
}

/// Random tree: joint 0 is the root, every other joint picks an earlier parent.
pub fn random_skeleton(rng: &mut ChaCha8Rng, joint_count: usize) -> Skeleton {
    let joints = (0..joint_count)
        .map(|j| Joint {
            name: format!("j{j}"),
            parent: (j > 0).then(|| rng.random_range(0..j)),
            offset: point(rng, 1.0),
        })
        .collect();
    Skeleton::new(joints).unwrap()
}

pub fn random_pose(rng: &mut ChaCha8Rng, joint_count: usize) -> Vec<LocalPose> {
    (0..joint_count)
        .map(|_| LocalPose {
            rotation: rotation(rng),
            translation: point(rng, 0.3),
        })
        .collect()
}

/// Textbook unit-quaternion to matrix formula.
pub fn quaternion_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

fn homogeneous(rotation: Matrix3<f64>, translation: Vec3) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    for r in 0..3 {
        for c in 0..3 {
            m[(r, c)] = rotation[(r, c)];
        }
        m[(r, 3)] = translation[r];
    }
    m
}

/// World matrices by walking each joint's ancestor chain and multiplying
/// local matrices from the root down.
pub fn oracle_fk(skeleton: &Skeleton, pose: &[LocalPose]) -> Vec<Matrix4<f64>> {
    let joints = skeleton.joints();
    (0..joints.len())
        .map(|j| {
            let mut chain = vec![j];
            while let Some(p) = joints[*chain.last().unwrap()].parent {
                chain.push(p);
            }
            let mut m = Matrix4::identity();
            for &k in chain.iter().rev() {
                let local = homogeneous(
                    quaternion_matrix(&pose[k].rotation),
                    joints[k].offset + pose[k].translation,
                );
                m *= local;
            }
            m
        })
        .collect()
}

pub fn max_abs_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Vertices whose position differs in any frame between the two sequences.
pub fn changed_vertices(before: &[Mesh], after: &[Mesh], tolerance: f64) -> Vec<usize> {
    let n = before[0].vertex_count();
    (0..n)
        .filter(|&v| {
            before
                .iter()
                .zip(after)
                .any(|(a, b)| (a.vertices[v] - b.vertices[v]).norm() > tolerance)
        })
        .collect()
}

/// Parts whose weight column differs between the two weight sets.
pub fn edited_parts(before: &SkinningWeights, after: &SkinningWeights) -> Vec<usize> {
    (0..before.part_count())
        .filter(|&p| (0..before.vertex_count()).any(|v| before.get(v, p) != after.get(v, p)))
        .collect()
}
