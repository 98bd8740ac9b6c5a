use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use meshmotion::anim::mocap::{write_bundle, BUNDLE_SUFFIX};
use meshmotion::anim::{skin_clip, JointEdit};
use meshmotion::pipeline::export::{frame_file_name, DiagnosticsFile};
use meshmotion::pipeline::store::ProjectStore;
use meshmotion::pipeline::{create_project, SourceUpload, TargetUpload};
use meshmotion::{
    converter, fixtures, mesh, retarget, EditCommand, JointEditRecord, Mesh, MoCapClient, MoCapError, MoCapRequest,
    MoCapResult, MockMoCapClient, Project, SkinningWeights, TransferSession,
};
use meshmotion_service::{correspondence_json, frame_json, labels_json, App, HttpMoCapClient, Job, ProjectSummary};

use crate::{ConvertArgs, EditArgs, FixtureArgs, FrameFormat, MoCapArgs, ProjectArgs, ProjectCommand, RetargetArgs, ServeArgs};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_mesh(path: &Path) -> Result<Mesh> {
    mesh::parse_obj(&read(path)?).with_context(|| path.display().to_string())
}

fn read_weights(path: &Path) -> Result<SkinningWeights> {
    SkinningWeights::from_json(&read(path)?).with_context(|| path.display().to_string())
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn retarget(a: RetargetArgs) -> Result<()> {
    let rest = read_mesh(&a.source_rest)?;
    let source_weights = read_weights(&a.source_weights)?;
    let target = read_mesh(&a.target)?;
    let target_weights = read_weights(&a.target_weights)?;

    let mut paths: Vec<_> = fs::read_dir(&a.source_clip)
        .with_context(|| format!("reading {}", a.source_clip.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .obj frames in {}", a.source_clip.display());
    }
    let frames = paths.iter().map(|p| read_mesh(p)).collect::<Result<Vec<_>>>()?;

    let session = TransferSession::new(&rest, source_weights, &target, target_weights)?;
    let out = retarget::transfer_clip(&session, &frames)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (i, frame) in out.iter().enumerate() {
        write(&a.out.join(frame_file_name(i)), &mesh::serialize_obj(&frame.mesh))?;
    }
    let diagnostics = DiagnosticsFile::new(out.iter().map(|f| &f.diagnostics));
    write(&a.out.join("diagnostics.json"), &diagnostics.to_json())?;
    eprintln!("wrote {} frames to {}", out.len(), a.out.display());
    Ok(())
}

fn edit_command(edit: &EditArgs) -> Result<EditCommand> {
    match (&edit.command, edit.label) {
        (Some(path), _) => serde_json::from_str(&read(path)?).with_context(|| path.display().to_string()),
        (None, Some(label)) => Ok(EditCommand::new(edit.vertices.iter().copied(), label)),
        (None, None) => bail!("give --vertices and --label, or --command"),
    }
}

pub fn convert(a: ConvertArgs) -> Result<()> {
    let mesh = read_mesh(&a.mesh)?;
    let weights = read_weights(&a.weights)?;
    let command = edit_command(&a.edit)?;
    let converted = converter::convert_edit(&mesh, &weights, &command, &a.converter.into())?;
    let text = converted.to_json()?;
    match a.out {
        Some(path) => write(&path, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Layout:
///
/// ```text
/// human/{mesh.obj, skeletal_weights.json, part_weights.json, clip.json}
/// human/frames/frame_NNNN.obj      skinned clip, input for `retarget`
/// target/{mesh.obj, weights.json, fix.json}
/// mocap/dance.bvh-bundle/          capture served by --mocap-fixtures mocap
/// ```
pub fn fixture(a: FixtureArgs) -> Result<()> {
    if a.frames == 0 {
        bail!("--frames must be positive");
    }
    let human = fixtures::human(a.frames);
    let target = fixtures::stylized_target();
    let h = a.out.join("human");
    write(&h.join("mesh.obj"), &mesh::serialize_obj(&human.mesh))?;
    write(&h.join("skeletal_weights.json"), &human.skeletal_weights.to_json()?)?;
    write(&h.join("part_weights.json"), &human.part_weights.to_json()?)?;
    write(&h.join("clip.json"), &human.clip.to_json())?;
    for (i, frame) in skin_clip(&human.clip, &human.mesh, &human.skeletal_weights)?.iter().enumerate() {
        write(&h.join("frames").join(frame_file_name(i)), &mesh::serialize_obj(frame))?;
    }
    let t = a.out.join("target");
    write(&t.join("mesh.obj"), &mesh::serialize_obj(&target.mesh))?;
    write(&t.join("weights.json"), &target.weights.to_json()?)?;
    write(&t.join("fix.json"), &serde_json::to_string(&target.fix)?)?;
    let bundle = a.out.join("mocap").join(format!("dance{BUNDLE_SUFFIX}"));
    write_bundle(&bundle, &human.mocap_result()).with_context(|| bundle.display().to_string())?;
    eprintln!("wrote fixtures to {}", a.out.display());
    Ok(())
}

/// Answers every capture with an explanation.
struct Unconfigured;

impl MoCapClient for Unconfigured {
    fn capture(&self, _: &MoCapRequest) -> Result<MoCapResult, MoCapError> {
        Err(MoCapError::JobFailed(
            "no capture service configured; pass --mocap-fixtures or --mocap-endpoint".into(),
        ))
    }
}

fn mocap_client(a: &MoCapArgs) -> Arc<dyn MoCapClient> {
    match (&a.mocap_fixtures, &a.mocap_endpoint) {
        (Some(dir), _) => Arc::new(MockMoCapClient::new(dir)),
        (None, Some(url)) => Arc::new(HttpMoCapClient::from_env(url)),
        (None, None) => Arc::new(Unconfigured),
    }
}

fn optional(path: &Option<std::path::PathBuf>) -> Result<Option<String>> {
    path.as_deref().map(read).transpose()
}

fn run_motrans(store: &ProjectStore, project: &mut Project) -> Result<Job> {
    let outcome = project.run_motrans()?;
    store.save_state(project)?;
    Ok(Job::Done {
        key: outcome.result.key.clone(),
        cache_hit: outcome.cache_hit,
        frame_count: outcome.result.frames.len(),
    })
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let store = ProjectStore::open(&a.store)?;
    match a.command {
        ProjectCommand::Create {
            id,
            source_mesh,
            source_weights,
            source_part_weights,
            clip,
            video,
            video_duration,
            target_mesh,
            target_weights,
        } => {
            let video = match (video, video_duration) {
                (Some(v), Some(d)) => {
                    let request = MoCapRequest::new(v, d);
                    request.check()?;
                    Some(request)
                }
                _ => None,
            };
            let source = SourceUpload {
                mesh_obj: optional(&source_mesh)?,
                skeletal_weights_json: optional(&source_weights)?,
                part_weights_json: optional(&source_part_weights)?,
                clip_json: optional(&clip)?,
                video,
            };
            let target = TargetUpload {
                mesh_obj: read(&target_mesh)?,
                weights_json: read(&target_weights)?,
            };
            let id = match id {
                Some(id) if store.exists(&id) => bail!("project {id} already exists"),
                Some(id) => id,
                None => store.next_id()?,
            };
            let project = create_project(id, &source, &target)?;
            store.save(&project)?;
            print_json(&ProjectSummary::of(&project))
        }
        ProjectCommand::List => print_json(&serde_json::json!({ "projects": store.list()? })),
        ProjectCommand::Show { id } => print_json(&ProjectSummary::of(&store.load(&id)?)),
        ProjectCommand::Stage { id, stage } => {
            let mut project = store.load(&id)?;
            // transfer results are not persisted, so recompute before moving to results
            if stage == meshmotion::Stage::Results {
                project.run_motrans()?;
            }
            project.set_stage(stage)?;
            store.save_state(&project)?;
            print_json(&ProjectSummary::of(&project))
        }
        ProjectCommand::Mocap {
            id,
            video,
            duration,
            mocap,
        } => {
            let mut project = store.load(&id)?;
            let request = match (video, duration) {
                (Some(v), Some(d)) => MoCapRequest::new(v, d),
                _ => project
                    .source()
                    .video
                    .clone()
                    .context("project has no video; pass --video and --duration")?,
            };
            project.run_mocap(&request, mocap_client(&mocap).as_ref())?;
            store.save(&project)?;
            print_json(&ProjectSummary::of(&project))
        }
        ProjectCommand::PoseEdit {
            id,
            frame,
            joint,
            rot,
            trans,
        } => {
            let mut project = store.load(&id)?;
            let joint = match joint.parse::<usize>() {
                Ok(j) => j,
                Err(_) => project
                    .clip()
                    .and_then(|c| c.skeleton().find(&joint))
                    .with_context(|| format!("no joint named {joint:?}"))?,
            };
            let record = JointEditRecord {
                frame,
                joint,
                rot: rot.unwrap_or([1.0, 0.0, 0.0, 0.0]),
                trans: trans.unwrap_or_default(),
            };
            project.apply_pose_edit(&JointEdit::try_from(record)?)?;
            store.save_state(&project)?;
            print_json(&ProjectSummary::of(&project))
        }
        ProjectCommand::WeightEdit { id, edit, converter } => {
            let mut project = store.load(&id)?;
            project.apply_weight_edit(&edit_command(&edit)?, &converter.into())?;
            store.save_state(&project)?;
            print_json(&ProjectSummary::of(&project))
        }
        ProjectCommand::Motrans { id } => {
            let mut project = store.load(&id)?;
            print_json(&run_motrans(&store, &mut project)?)
        }
        ProjectCommand::Frame { id, n, format } => {
            let mut project = store.load(&id)?;
            let frame_count = project.run_motrans()?.result.frames.len();
            store.save_state(&project)?;
            let frame = project.frame(n)?;
            match format {
                FrameFormat::Obj => {
                    print!("{}", mesh::serialize_obj(&frame));
                    Ok(())
                }
                FrameFormat::Json => print_json(&frame_json(&frame, n, frame_count)),
            }
        }
        ProjectCommand::Labels { id } => print_json(&labels_json(&store.load(&id)?)),
        ProjectCommand::Correspondence { id, label } => print_json(&correspondence_json(&store.load(&id)?, label)?),
        ProjectCommand::Export { id, out } => {
            let mut project = store.load(&id)?;
            project.run_motrans()?;
            let manifest = project.export(&out)?;
            store.save_state(&project)?;
            print_json(&manifest)
        }
    }
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let store = ProjectStore::open(&a.store)?;
    let app = App::new(store, mocap_client(&a.mocap))
        .with_token(a.token.filter(|t| !t.is_empty()))
        .with_converter(a.converter.into());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        meshmotion_service::serve(listener, app).await?;
        Ok(())
    })
}
