use std::fs;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use meshmotion::fixtures::{self, label};
use meshmotion::pipeline::export::sha256_hex;
use meshmotion::skinning::argmax_label;
use meshmotion::{mesh, SkinningWeights};
use serde_json::Value;

const FRAMES: usize = 6;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_meshmotion"));
    c.env_remove("MESHMOTION_STORE").env_remove("MESHMOTION_API_TOKEN").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixture", "--out", p(dir.path()), "--frames", &FRAMES.to_string()]);
    dir
}

#[test]
fn fixture_then_batch_retarget() {
    let fx = fixture_dir();
    let d = fx.path();
    assert_eq!(fs::read_dir(d.join("human/frames")).unwrap().count(), FRAMES);
    for f in ["clip.json", "mesh.obj", "weights.json"] {
        assert!(d.join("mocap/dance.bvh-bundle").join(f).is_file());
    }

    let out = d.join("out");
    ok(&[
        "retarget",
        "--source-rest",
        p(&d.join("human/mesh.obj")),
        "--source-clip",
        p(&d.join("human/frames")),
        "--source-weights",
        p(&d.join("human/part_weights.json")),
        "--target",
        p(&d.join("target/mesh.obj")),
        "--target-weights",
        p(&d.join("target/weights.json")),
        "--out",
        p(&out),
    ]);
    let target = fixtures::stylized_target();
    for i in 0..FRAMES {
        let frame = mesh::parse_obj(&fs::read_to_string(out.join(format!("frame_{i:04}.obj"))).unwrap()).unwrap();
        assert_eq!(frame.faces, target.mesh.faces);
    }
    let diagnostics: Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let frames = diagnostics["frames"].as_array().unwrap();
    assert_eq!(frames.len(), FRAMES);
    assert_eq!(frames[0]["parts"].as_array().unwrap().len(), 40);
    assert!(frames[0]["parts"][0]["residual"].is_number());

    let empty = d.join("empty");
    fs::create_dir(&empty).unwrap();
    let err = fail(&[
        "retarget",
        "--source-rest",
        p(&d.join("human/mesh.obj")),
        "--source-clip",
        p(&empty),
        "--source-weights",
        p(&d.join("human/part_weights.json")),
        "--target",
        p(&d.join("target/mesh.obj")),
        "--target-weights",
        p(&d.join("target/weights.json")),
        "--out",
        p(&out),
    ]);
    assert!(err.contains("no .obj frames"), "{err}");
}

#[test]
fn convert_repaints_the_mislabeled_tip() {
    let fx = fixture_dir();
    let d = fx.path();
    let target = fixtures::stylized_target();
    let mesh_path = d.join("target/mesh.obj");
    let weights_path = d.join("target/weights.json");
    let from_file = ok(&[
        "convert",
        "--mesh",
        p(&mesh_path),
        "--weights",
        p(&weights_path),
        "--command",
        p(&d.join("target/fix.json")),
    ]);
    let w = SkinningWeights::from_json(&from_file).unwrap();
    assert!(w.validate().is_valid());
    for &v in &target.mislabeled {
        assert_eq!(argmax_label(&w, v).0, label::RIGHT_PALM);
    }

    let ids: Vec<String> = target.fix.vertex_ids.iter().map(usize::to_string).collect();
    let inline = ok(&[
        "convert",
        "--mesh",
        p(&mesh_path),
        "--weights",
        p(&weights_path),
        "--vertices",
        &ids.join(","),
        "--label",
        &label::RIGHT_PALM.to_string(),
    ]);
    assert_eq!(inline, from_file);

    let out = d.join("p2.json");
    ok(&[
        "convert",
        "--mesh",
        p(&mesh_path),
        "--weights",
        p(&weights_path),
        "--command",
        p(&d.join("target/fix.json")),
        "--idw-power",
        "2",
        "--out",
        p(&out),
    ]);
    assert_ne!(fs::read_to_string(out).unwrap().trim(), from_file.trim());

    fail(&["convert", "--mesh", p(&mesh_path), "--weights", p(&weights_path)]);
    let err = fail(&[
        "convert",
        "--mesh",
        p(&mesh_path),
        "--weights",
        p(&weights_path),
        "--vertices",
        "0",
        "--label",
        "40",
    ]);
    assert!(err.contains("40"), "{err}");
}

#[test]
fn project_workflow_mirrors_the_api() {
    let fx = fixture_dir();
    let d = fx.path();
    let store = d.join("store");
    let s = p(&store);
    let created = ok_json(&[
        "project",
        "--store",
        s,
        "create",
        "--source-mesh",
        p(&d.join("human/mesh.obj")),
        "--source-weights",
        p(&d.join("human/skeletal_weights.json")),
        "--source-part-weights",
        p(&d.join("human/part_weights.json")),
        "--clip",
        p(&d.join("human/clip.json")),
        "--target-mesh",
        p(&d.join("target/mesh.obj")),
        "--target-weights",
        p(&d.join("target/weights.json")),
    ]);
    assert_eq!(created["id"], "p0001");
    assert_eq!(created["stage"], "mocap");
    assert_eq!(ok_json(&["project", "--store", s, "list"])["projects"][0], "p0001");

    let first = ok_json(&["project", "--store", s, "motrans", "p0001"]);
    assert_eq!(first["status"], "done");
    assert_eq!(first["frame_count"], FRAMES);

    let edited = ok_json(&["project", "--store", s, "weight-edit", "p0001", "--command", p(&d.join("target/fix.json"))]);
    assert_eq!(edited["history"].as_array().unwrap().len(), 1);
    let second = ok_json(&["project", "--store", s, "motrans", "p0001"]);
    assert_eq!(second["key"]["clip"], first["key"]["clip"]);
    assert_ne!(second["key"]["weights"], first["key"]["weights"]);

    let frame = ok_json(&["project", "--store", s, "frame", "p0001", "2", "--format", "json"]);
    let v = fixtures::stylized_target().mesh.vertex_count();
    assert_eq!(frame["positions"].as_array().unwrap().len(), 3 * v);
    let obj = ok(&["project", "--store", s, "frame", "p0001", "2"]);
    assert_eq!(mesh::parse_obj(&obj).unwrap().vertex_count(), v);

    let labels = ok_json(&["project", "--store", s, "labels", "p0001"]);
    assert_eq!(labels["palette"].as_array().unwrap().len(), 40);
    let corr = ok_json(&["project", "--store", s, "correspondence", "p0001", &label::RIGHT_PALM.to_string()]);
    assert!(!corr["target"].as_array().unwrap().is_empty());
    assert!(fail(&["project", "--store", s, "correspondence", "p0001", "40"]).contains("out of range"));

    let a = d.join("export-a");
    let b = d.join("export-b");
    let manifest = ok_json(&["project", "--store", s, "export", "p0001", "--out", p(&a)]);
    ok(&["project", "--store", s, "export", "p0001", "--out", p(&b)]);
    assert_eq!(manifest["frame_count"], FRAMES);
    for f in manifest["files"].as_array().unwrap() {
        let name = f["name"].as_str().unwrap();
        let bytes = fs::read(a.join(name)).unwrap();
        assert_eq!(sha256_hex(&bytes), f["sha256"]);
        assert_eq!(bytes, fs::read(b.join(name)).unwrap());
    }
    assert_eq!(ok_json(&["project", "--store", s, "show", "p0001"])["stage"], "results");
    assert_eq!(ok_json(&["project", "--store", s, "stage", "p0001", "upload"])["stage"], "upload");
    assert!(fail(&["project", "--store", s, "stage", "p0001", "later"]).contains("unknown stage"));
}

#[test]
fn video_project_capture_and_pose_edit() {
    let fx = fixture_dir();
    let d = fx.path();
    let store = d.join("store");
    let s = p(&store);
    let (t_mesh, t_weights, part) = (d.join("target/mesh.obj"), d.join("target/weights.json"), d.join("human/part_weights.json"));
    let target = ["--target-mesh", p(&t_mesh), "--target-weights", p(&t_weights)];
    let mut create = vec!["project", "--store", s, "create", "--id", "dance", "--video", "dance.mp4"];
    create.extend(["--source-part-weights", p(&part)]);
    let mut too_long = create.clone();
    too_long.extend(["--video-duration", "25"]);
    too_long.extend(target);
    assert!(fail(&too_long).contains("limit is 20"));

    create.extend(["--video-duration", "9.5"]);
    create.extend(target);
    assert_eq!(ok_json(&create)["id"], "dance");
    assert!(fail(&create).contains("already exists"));
    assert!(fail(&["project", "--store", s, "mocap", "dance"]).contains("no capture service"));

    let captured = ok_json(&["project", "--store", s, "mocap", "dance", "--mocap-fixtures", p(&d.join("mocap"))]);
    assert_eq!(captured["frame_count"], FRAMES);
    let posed = ok_json(&[
        "project", "--store", s, "pose-edit", "dance", "--frame", "1", "--joint", "head", "--rot", "0.98,0,0.2,0", "--trans",
        "0,-0.01,0",
    ]);
    let entry = &posed["history"][0]["edit"];
    assert_eq!(entry["kind"], "pose");
    assert_eq!(entry["joint"], fixtures::human_skeleton().find("head").unwrap());
    assert!(fail(&["project", "--store", s, "mocap", "dance", "--mocap-fixtures", p(&d.join("mocap"))]).contains("pose edit"));
    assert_eq!(ok_json(&["project", "--store", s, "motrans", "dance"])["frame_count"], FRAMES);
    assert!(fail(&["project", "--store", s, "show", "nobody"]).contains("no project"));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_answers_http() {
    let store = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let _server = Server(
        bin()
            .args(["serve", "--store", p(store.path()), "--addr", &addr])
            .env("MESHMOTION_API_TOKEN", "tok")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let base = format!("http://{addr}");
    let mut up = false;
    for _ in 0..200 {
        if agent.get(format!("{base}/health")).call().is_ok() {
            up = true;
            break;
        }
        thread::sleep(Duration::from_millis(25));
    }
    assert!(up, "server did not start");
    assert_eq!(agent.get(format!("{base}/projects")).call().unwrap().status(), 401);
    let mut ok = agent
        .get(format!("{base}/projects"))
        .header("Authorization", "Bearer tok")
        .call()
        .unwrap();
    assert_eq!(ok.status(), 200);
    assert_eq!(ok.body_mut().read_to_string().unwrap(), r#"{"projects":[]}"#);
}
