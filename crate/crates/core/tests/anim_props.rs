mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::*;
use meshmotion::anim::mocap::{mocap_submit, MoCapClient, MoCapError, MoCapRequest, MoCapResult, MockMoCapClient};
use meshmotion::anim::{apply_joint_edit, forward_kinematics, skin_clip, AnimationClip, JointEdit, JointEditRecord};
use meshmotion::fixtures;
use meshmotion::skinning::{lbs_deform, PartTransformSet};
use proptest::prelude::*;
use rand::Rng;

fn random_clip(seed: u64, max_joints: usize, max_frames: usize) -> AnimationClip {
    let mut r = rng(seed);
    let joints = r.random_range(1..=max_joints);
    let skeleton = random_skeleton(&mut r, joints);
    let frames = (0..r.random_range(1..=max_frames)).map(|_| random_pose(&mut r, joints)).collect();
    AnimationClip::new(skeleton, frames, 30.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_matches_matrix_stack(seed in any::<u64>()) {
        let clip = random_clip(seed, 12, 1);
        let got = forward_kinematics(clip.skeleton(), clip.frame(0)).unwrap();
        let want = oracle_fk(clip.skeleton(), clip.frame(0));
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g.to_homogeneous() - w).amax() <= 1e-9);
        }
    }

    #[test]
    fn joint_edit_touches_one_pose(seed in any::<u64>()) {
        let clip = random_clip(seed, 8, 6);
        let mut r = rng(seed.wrapping_add(1));
        let edit = JointEdit {
            frame_index: r.random_range(0..clip.frame_count()),
            joint_index: r.random_range(0..clip.skeleton().len()),
            rotation: rotation(&mut r),
            translation: point(&mut r, 0.2),
        };
        let edited = apply_joint_edit(&clip, &edit).unwrap();
        for (f, (a, b)) in clip.frames().iter().zip(edited.frames()).enumerate() {
            for (j, (x, y)) in a.iter().zip(b).enumerate() {
                if (f, j) != (edit.frame_index, edit.joint_index) {
                    prop_assert_eq!(x, y);
                }
            }
        }
        let restored = apply_joint_edit(&edited, &edit.inverse()).unwrap();
        let (a, b) = (&clip.frame(edit.frame_index)[edit.joint_index], &restored.frame(edit.frame_index)[edit.joint_index]);
        prop_assert!(a.rotation.angle_to(&b.rotation) < 1e-12);
        prop_assert!((a.translation - b.translation).amax() < 1e-12);
    }

    #[test]
    fn clip_json_round_trip(seed in any::<u64>()) {
        let clip = random_clip(seed, 10, 8);
        prop_assert_eq!(AnimationClip::from_json(&clip.to_json()).unwrap(), clip);
    }

    #[test]
    fn joint_edit_record_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let edit = JointEdit {
            frame_index: r.random_range(0..1000),
            joint_index: r.random_range(0..64),
            rotation: rotation(&mut r),
            translation: point(&mut r, 1.0),
        };
        let record = JointEditRecord::from(&edit);
        let text = serde_json::to_string(&record).unwrap();
        let back: JointEditRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &record);
        prop_assert_eq!(JointEdit::try_from(back).unwrap(), edit);
    }

    #[test]
    fn single_joint_skinning_is_rigid(seed in any::<u64>()) {
        // one joint, every vertex fully bound: skinning equals the joint's
        // world motion relative to rest
        let mut r = rng(seed);
        let skeleton = random_skeleton(&mut r, 1);
        let pose = random_pose(&mut r, 1);
        let clip = AnimationClip::new(skeleton.clone(), vec![pose.clone()], 24.0).unwrap();
        let mesh = random_mesh(&mut r, 20, 10);
        let weights = meshmotion::skinning::SkinningWeights::one_hot(1, &[0; 20]).unwrap();
        let out = skin_clip(&clip, &mesh, &weights).unwrap();
        let offset = skeleton.joints()[0].offset;
        let want = lbs_deform(&mesh, &weights, &PartTransformSet {
            frame_index: 0,
            rotations: vec![pose[0].rotation],
            translations: vec![offset + pose[0].translation - pose[0].rotation * offset],
        }).unwrap();
        prop_assert!(max_abs_diff(&out[0].vertices, &want.vertices) < 1e-12);
    }
}

#[test]
fn identity_clip_skins_to_rest_exactly() {
    let human = fixtures::human(1);
    let rest = AnimationClip::rest(human.skeleton.clone(), 3, 24.0).unwrap();
    for frame in skin_clip(&rest, &human.mesh, &human.skeletal_weights).unwrap() {
        assert_eq!(frame, human.mesh);
    }
}

#[test]
fn malformed_clip_is_rejected() {
    let clip = |skeleton: &str, pose: &str| {
        format!(r#"{{"frame_rate":24,"skeleton":{skeleton},"frames":[[{pose}]]}}"#)
    };
    let root = r#"[{"name":"a","parent":null,"offset":[0,0,0]}]"#;
    let identity = r#"{"rot":[1,0,0,0],"trans":[0,0,0]}"#;
    assert!(AnimationClip::from_json(&clip(root, identity)).is_ok());

    let forward_parent = r#"[{"name":"a","parent":null,"offset":[0,0,0]},{"name":"b","parent":1,"offset":[0,1,0]}]"#;
    let two = format!("{identity},{identity}");
    assert!(AnimationClip::from_json(&clip(forward_parent, &two)).is_err());
    assert!(AnimationClip::from_json(&clip(root, r#"{"rot":[2,0,0,0],"trans":[0,0,0]}"#)).is_err());
    assert!(AnimationClip::from_json(&clip(root, &two)).is_err());
}

struct Counting(AtomicUsize);

impl MoCapClient for Counting {
    fn capture(&self, request: &MoCapRequest) -> Result<MoCapResult, MoCapError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(MoCapError::NotFound(request.video.clone()))
    }
}

#[test]
fn long_video_never_reaches_the_client() {
    let client = Counting(AtomicUsize::new(0));
    for seconds in [20.0001, 25.0, 600.0] {
        assert!(matches!(
            mocap_submit(&MoCapRequest::new("dance.mp4", seconds), &client),
            Err(MoCapError::DurationExceeded { .. })
        ));
    }
    assert_eq!(client.0.load(Ordering::SeqCst), 0);
}

#[test]
fn mock_client_serves_written_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let human = fixtures::human(10);
    let result = human.mocap_result();
    let client = MockMoCapClient::new(dir.path());
    let request = MoCapRequest::new("uploads/dance.mp4", 12.0);
    meshmotion::anim::mocap::write_bundle(&client.bundle_dir(&request), &result).unwrap();
    let got = mocap_submit(&request, &client).unwrap();
    assert_eq!(got.clip, result.clip);
    assert_eq!(got.weights, result.weights);
    assert_eq!(got.mesh.faces, result.mesh.faces);
    assert!(max_abs_diff(&got.mesh.vertices, &result.mesh.vertices) <= 1e-6);
}
