mod common;

use common::*;
use meshmotion::mesh::{Mesh, Vec3};
use meshmotion::retarget::{fit_part_transforms, part_centroids, transfer_clip, RetargetError, TransferSession};
use meshmotion::skinning::{lbs_deform, PartTransformSet, SkinningWeights};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn character(r: &mut ChaCha8Rng, parts: usize, faces: bool) -> (Mesh, SkinningWeights) {
    let mut vertices = Vec::new();
    let mut labels = Vec::new();
    for part in 0..parts {
        let center = Vector3::new(part as f64 * 1.5, (part % 3) as f64, 0.2 * part as f64);
        for _ in 0..r.random_range(5..=12) {
            vertices.push(center + point(r, 0.5));
            labels.push(part);
        }
    }
    let n = vertices.len();
    let faces = if faces { (0..n - 2).map(|i| [i, i + 1, i + 2]).collect() } else { vec![] };
    (Mesh::new("c", vertices, faces).unwrap(), SkinningWeights::one_hot(parts, &labels).unwrap())
}

fn clip(r: &mut ChaCha8Rng, rest: &Mesh, w: &SkinningWeights, frames: usize) -> Vec<Mesh> {
    let k = w.part_count();
    (0..frames)
        .map(|f| {
            let t = PartTransformSet {
                frame_index: f,
                rotations: (0..k).map(|_| rotation(r)).collect(),
                translations: (0..k).map(|_| point(r, 1.0)).collect(),
            };
            lbs_deform(rest, w, &t).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn procrustes_det_positive_near_planar(seed in any::<u64>(), n in 4usize..30, flatness in prop::sample::select(vec![1.0, 1e-3, 1e-6])) {
        let mut r = rng(seed);
        let rest: Vec<Vec3> = (0..n).map(|_| {
            let p = point(&mut r, 1.0);
            Vector3::new(p.x, p.y, p.z * flatness)
        }).collect();
        let q = rotation(&mut r);
        let t = point(&mut r, 2.0);
        let rest = Mesh::new("p", rest, vec![]).unwrap();
        let posed = rest.with_vertices(rest.vertices.iter().map(|p| q * p + t).collect());
        let w = SkinningWeights::one_hot(1, &vec![0; n]).unwrap();
        let (fit, diag) = fit_part_transforms(&rest, &posed, &w).unwrap();
        let m = fit.rotations[0].to_rotation_matrix().into_inner();
        prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        if !diag.parts[0].degenerate {
            prop_assert!((m - quaternion_matrix(&q)).norm() < 1e-6);
            prop_assert!((fit.translations[0] - t).norm() < 1e-6);
        }
    }

    #[test]
    fn self_retarget_identity(seed in any::<u64>(), parts in 1usize..6) {
        let mut r = rng(seed);
        let (rest, w) = character(&mut r, parts, true);
        let frames = clip(&mut r, &rest, &w, 3);
        let session = TransferSession::new(&rest, w.clone(), &rest, w).unwrap();
        let out = transfer_clip(&session, &frames).unwrap();
        prop_assert_eq!(out.len(), 3);
        for (got, want) in out.iter().zip(&frames) {
            prop_assert_eq!(&got.mesh.faces, &rest.faces);
            prop_assert!(max_abs_diff(&got.mesh.vertices, &want.vertices) < 1e-6);
        }
    }

    #[test]
    fn global_rotation_equivariance(seed in any::<u64>(), parts in 1usize..5) {
        let mut r = rng(seed);
        let (rest, w) = character(&mut r, parts, false);
        let frames = clip(&mut r, &rest, &w, 2);
        let g = rotation(&mut r);
        let rotated: Vec<Mesh> = frames.iter().map(|m| m.with_vertices(m.vertices.iter().map(|p| g * p).collect())).collect();
        // blended weights on the same mesh move the target part centroids
        let k = w.part_count();
        let blended = SkinningWeights::from_rows(k, (0..rest.vertex_count()).map(|v| {
            let mut row = w.row(v).to_vec();
            if k > 1 {
                let own = row.iter().position(|&x| x == 1.0).unwrap();
                row[own] = 0.7;
                row[(own + 1) % k] = 0.3;
            }
            row
        }).collect()).unwrap();
        // identical weights: target and source part centroids coincide
        let session = TransferSession::new(&rest, w.clone(), &rest, w.clone()).unwrap();
        let a = transfer_clip(&session, &frames).unwrap();
        let b = transfer_clip(&session, &rotated).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let want: Vec<Vec3> = x.mesh.vertices.iter().map(|p| g * p).collect();
            prop_assert!(max_abs_diff(&y.mesh.vertices, &want) < 1e-6);
        }

        // With target part centroids away from the source ones, the output
        // picks up (I - G) * sum_k W[j,k] (cT_k - cH_k) on top of G * out.
        let c_h = part_centroids(&rest, &w);
        let c_t = part_centroids(&rest, &blended);
        let session = TransferSession::new(&rest, w, &rest, blended.clone()).unwrap();
        let a = transfer_clip(&session, &frames).unwrap();
        let b = transfer_clip(&session, &rotated).unwrap();
        let g_m = quaternion_matrix(&g);
        for (x, y) in a.iter().zip(&b) {
            let want: Vec<Vec3> = x.mesh.vertices.iter().enumerate().map(|(j, p)| {
                let mut d = Vec3::zeros();
                for (k, &wt) in blended.row(j).iter().enumerate() {
                    if wt != 0.0 {
                        d += wt * (c_t[k].unwrap() - c_h[k].unwrap());
                    }
                }
                g * p + (nalgebra::Matrix3::identity() - g_m) * d
            }).collect();
            prop_assert!(max_abs_diff(&y.mesh.vertices, &want) < 1e-6);
        }
    }

    #[test]
    fn frame_permutation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (rest, w) = character(&mut r, 3, false);
        let (target, tw) = character(&mut rng(seed ^ 0xabcdef), 3, false);
        let frames = clip(&mut r, &rest, &w, 5);
        let mut order: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let permuted: Vec<Mesh> = order.iter().map(|&i| frames[i].clone()).collect();
        let session = TransferSession::new(&rest, w, &target, tw).unwrap();
        let a = transfer_clip(&session, &frames).unwrap();
        let b = transfer_clip(&session, &permuted).unwrap();
        for (slot, &i) in order.iter().enumerate() {
            prop_assert_eq!(&b[slot].mesh, &a[i].mesh);
            prop_assert_eq!(&b[slot].diagnostics, &a[i].diagnostics);
        }
    }

    #[test]
    fn scaled_copy_follows_proportionally(seed in any::<u64>(), scale in 0.2f64..5.0) {
        let mut r = rng(seed);
        let (rest, w) = character(&mut r, 3, false);
        let offset = point(&mut r, 10.0);
        let big = rest.with_vertices(rest.vertices.iter().map(|p| p * scale + offset).collect());
        let frames = clip(&mut r, &rest, &w, 2);
        let session = TransferSession::new(&rest, w.clone(), &big, w).unwrap();
        prop_assert!((session.scale_ratio() - scale).abs() < 1e-9 * scale);
        let out = transfer_clip(&session, &frames).unwrap();
        // posed source about its rest centroid, scaled, placed at the copy's centroid
        let c_src: Vec3 = rest.vertices.iter().sum::<Vec3>() / rest.vertex_count() as f64;
        let c_big: Vec3 = big.vertices.iter().sum::<Vec3>() / big.vertex_count() as f64;
        for (got, posed) in out.iter().zip(&frames) {
            let want: Vec<Vec3> = posed.vertices.iter().map(|p| (p - c_src) * scale + c_big).collect();
            prop_assert!(max_abs_diff(&got.mesh.vertices, &want) < 1e-6 * scale.max(1.0));
        }
    }
}

#[test]
fn pure_translation_moves_only_that_part() {
    let mut r = rng(9);
    let (rest, w) = character(&mut r, 3, false);
    let (target, tw) = character(&mut rng(10), 3, false);
    let mut t = PartTransformSet::identity(3, 0);
    t.translations[1] = Vector3::new(0.0, 1.0, 0.0);
    let posed = lbs_deform(&rest, &w, &t).unwrap();
    let session = TransferSession::new(&rest, w, &target, tw.clone()).unwrap();
    let out = transfer_clip(&session, &[posed]).unwrap();
    // the source moved by one unit of its own height; the target moves by one
    // unit of the target's height
    let height = |m: &Mesh| {
        let (lo, hi) = m.bounding_box().unwrap();
        hi.y - lo.y
    };
    let expected = Vector3::new(0.0, height(&target) / height(&rest), 0.0);
    for v in 0..target.vertex_count() {
        let d = out[0].mesh.vertices[v] - target.vertices[v];
        let want = if tw.get(v, 1) == 1.0 { expected } else { Vector3::zeros() };
        assert!((d - want).norm() < 1e-9, "vertex {v}: moved {d:?}, want {want:?}");
    }
}

#[test]
fn rest_frame_gives_target_rest() {
    let mut r = rng(3);
    let (rest, w) = character(&mut r, 4, true);
    let (target, tw) = character(&mut rng(4), 4, true);
    let session = TransferSession::new(&rest, w, &target, tw).unwrap();
    let out = transfer_clip(&session, std::slice::from_ref(&rest)).unwrap();
    assert!(max_abs_diff(&out[0].mesh.vertices, &target.vertices) < 1e-12);
    assert_eq!(out[0].mesh.faces, target.faces);
}

#[test]
fn bad_frame_is_named() {
    let mut r = rng(5);
    let (rest, w) = character(&mut r, 2, true);
    let good = rest.clone();
    let mut bad = rest.clone();
    bad.vertices.pop();
    bad.faces.clear();
    let session = TransferSession::new(&rest, w.clone(), &rest, w).unwrap();
    match transfer_clip(&session, &[good.clone(), good, bad]) {
        Err(RetargetError::Frame { index, .. }) => assert_eq!(index, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn quaternion_helper_agrees_with_nalgebra() {
    let q = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
    assert!((quaternion_matrix(&q) - q.to_rotation_matrix().into_inner()).norm() < 1e-14);
}
