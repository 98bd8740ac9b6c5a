//! Workloads shared by the benchmarks.

use meshmotion::fixtures::{self, HumanFixture, TargetFixture};
use meshmotion::mesh::Vec3;
use meshmotion::{Mesh, TransferSession};
use nalgebra::Vector3;

/// Deterministic point cloud on a slightly wavy sphere.
pub fn cloud(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt() * (1.0 + 0.1 * (7.0 * i as f64).sin());
            let a = golden * i as f64;
            Vector3::new(r * a.cos(), y, r * a.sin())
        })
        .collect()
}

pub struct Demo {
    pub human: HumanFixture,
    pub target: TargetFixture,
    pub source_frames: Vec<Mesh>,
    pub session: TransferSession,
}

/// The bundled demo pair with its clip skinned to `frames` posed meshes.
pub fn demo(frames: usize) -> Demo {
    let human = fixtures::human(frames);
    let target = fixtures::stylized_target();
    let source_frames =
        meshmotion::anim::skin_clip(&human.clip, &human.mesh, &human.skeletal_weights).expect("fixture clip skins");
    let session = TransferSession::new(&human.mesh, human.part_weights.clone(), &target.mesh, target.weights.clone())
        .expect("fixture pair is compatible");
    Demo {
        human,
        target,
        source_frames,
        session,
    }
}
