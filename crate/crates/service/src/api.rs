use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use meshmotion::anim::JointEdit;
use meshmotion::pipeline::store::ProjectStore;
use meshmotion::pipeline::{create_project, CacheKey, HistoryEntry, PipelineError, SourceUpload, TargetUpload};
use meshmotion::skinning::{argmax_label, SkinningWeights};
use meshmotion::{ConverterConfig, Mesh, EditCommand, JointEditRecord, MoCapClient, MoCapRequest, PartLabel, Project, Stage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;

use crate::error::ApiError;

const UPLOAD_LIMIT: usize = 512 * 1024 * 1024;
const EXPORT_DIR: &str = "export";

/// Shared service state: the project store, loaded projects behind
/// per-project locks, and transfer job status.
#[derive(Clone)]
pub struct App {
    inner: Arc<Inner>,
}

struct Inner {
    store: ProjectStore,
    mocap: Arc<dyn MoCapClient>,
    token: Option<String>,
    converter: ConverterConfig,
    projects: Mutex<HashMap<String, Arc<RwLock<Project>>>>,
    jobs: Mutex<HashMap<String, Job>>,
    create: Mutex<()>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Job {
    Running { key: CacheKey },
    Done { key: CacheKey, cache_hit: bool, frame_count: usize },
    Failed { key: CacheKey, error: String },
}

impl Job {
    fn key(&self) -> &CacheKey {
        match self {
            Job::Running { key } | Job::Done { key, .. } | Job::Failed { key, .. } => key,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ProjectSummary {
    pub id: String,
    pub stage: Stage,
    pub part_count: usize,
    pub frame_count: Option<usize>,
    pub frame_rate: Option<f64>,
    pub source_vertex_count: Option<usize>,
    pub target_vertex_count: usize,
    pub video: Option<MoCapRequest>,
    pub results_current: bool,
    pub history: Vec<HistoryEntry>,
}

impl ProjectSummary {
    pub fn of(p: &Project) -> Self {
        ProjectSummary {
            id: p.id().to_string(),
            stage: p.stage(),
            part_count: p.part_count(),
            frame_count: p.clip().map(|c| c.frame_count()),
            frame_rate: p.clip().map(|c| c.frame_rate()),
            source_vertex_count: p.source().mesh.as_ref().map(|m| m.vertex_count()),
            target_vertex_count: p.target().mesh.vertex_count(),
            video: p.source().video.clone(),
            results_current: p.latest_result().is_some(),
            history: p.history().to_vec(),
        }
    }
}

impl App {
    pub fn new(store: ProjectStore, mocap: Arc<dyn MoCapClient>) -> Self {
        App {
            inner: Arc::new(Inner {
                store,
                mocap,
                token: None,
                converter: ConverterConfig::default(),
                projects: Mutex::default(),
                jobs: Mutex::default(),
                create: Mutex::default(),
            }),
        }
    }

    /// Requires `Authorization: Bearer <token>` on every project route.
    pub fn with_token(self, token: Option<String>) -> Self {
        self.rebuild(|i| i.token = token)
    }

    /// Converter settings for weight edits that do not carry their own.
    pub fn with_converter(self, config: ConverterConfig) -> Self {
        self.rebuild(|i| i.converter = config)
    }

    fn rebuild(self, f: impl FnOnce(&mut Inner)) -> Self {
        let mut inner = Arc::try_unwrap(self.inner).unwrap_or_else(|_| panic!("App configured after it was shared"));
        f(&mut inner);
        App { inner: Arc::new(inner) }
    }

    pub fn store(&self) -> &ProjectStore {
        &self.inner.store
    }

    async fn project(&self, id: &str) -> Result<Arc<RwLock<Project>>, ApiError> {
        if let Some(p) = self.inner.projects.lock().unwrap().get(id) {
            return Ok(p.clone());
        }
        let app = self.clone();
        let owned = id.to_string();
        let loaded = blocking(move || app.inner.store.load(&owned)).await?;
        let mut map = self.inner.projects.lock().unwrap();
        Ok(map.entry(id.to_string()).or_insert_with(|| Arc::new(RwLock::new(loaded))).clone())
    }

    /// Runs `f` on a copy of the project under its exclusive lock and keeps
    /// the copy only if `f` succeeds, so a failed edit or save leaves the
    /// project untouched.
    async fn mutate<T: Send + 'static>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Project, &ProjectStore) -> Result<T, PipelineError> + Send + 'static,
    ) -> Result<(T, ProjectSummary), ApiError> {
        let lock = self.project(id).await?;
        let mut guard = lock.write_owned().await;
        let app = self.clone();
        blocking(move || {
            let mut next = guard.clone();
            let out = f(&mut next, &app.inner.store)?;
            let summary = ProjectSummary::of(&next);
            *guard = next;
            Ok((out, summary))
        })
        .await
    }

    fn set_job(&self, id: &str, job: Job) {
        self.inner.jobs.lock().unwrap().insert(id.to_string(), job);
    }

    fn job(&self, id: &str) -> Option<Job> {
        self.inner.jobs.lock().unwrap().get(id).cloned()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, PipelineError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn parse_index(what: &str, text: &str) -> Result<usize, ApiError> {
    text.parse().map_err(|_| ApiError::bad_request(format!("{what} must be a non-negative integer, got {text:?}")))
}

pub fn router(app: App) -> Router {
    let projects = Router::new()
        .route("/projects", post(create).get(list))
        .route("/projects/{id}", get(summary))
        .route("/projects/{id}/stage", post(set_stage))
        .route("/projects/{id}/mocap", post(mocap))
        .route("/projects/{id}/pose-edits", post(pose_edit))
        .route("/projects/{id}/weight-edits", post(weight_edit))
        .route("/projects/{id}/motrans", post(start_motrans).get(motrans_status))
        .route("/projects/{id}/frames/{n}", get(frame))
        .route("/projects/{id}/labels", get(labels))
        .route("/projects/{id}/correspondence/{k}", get(correspondence))
        .route("/projects/{id}/export", get(export))
        .route("/projects/{id}/export/{file}", get(export_file))
        .route_layer(middleware::from_fn_with_state(app.clone(), require_token));
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .merge(projects)
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(app)
}

async fn require_token(State(app): State<App>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &app.inner.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token"));
        }
    }
    Ok(next.run(req).await)
}

/// Multipart fields accepted by `POST /projects`.
pub const UPLOAD_FIELDS: [&str; 9] = [
    "id",
    "source_mesh",
    "source_weights",
    "source_part_weights",
    "clip",
    "video",
    "video_duration",
    "target_mesh",
    "target_weights",
];

async fn create(State(app): State<App>, mut multipart: Multipart) -> Result<(StatusCode, Json<ProjectSummary>), ApiError> {
    let mut fields = HashMap::new();
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        if !UPLOAD_FIELDS.contains(&name.as_str()) {
            return Err(ApiError::bad_request(format!("unknown upload field {name:?}")));
        }
        let text = field.text().await.map_err(|e| ApiError::bad_request(format!("{name}: {e}")))?;
        fields.insert(name, text);
    }
    let video = match (fields.remove("video"), fields.remove("video_duration")) {
        (Some(video), Some(duration)) => {
            let seconds: f64 = duration
                .trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("video_duration {duration:?} is not a number")))?;
            let request = MoCapRequest::new(video, seconds);
            request.check().map_err(PipelineError::from)?;
            Some(request)
        }
        (None, None) => None,
        _ => return Err(ApiError::bad_request("video and video_duration go together")),
    };
    let mut required = |name: &str| fields.remove(name).ok_or_else(|| ApiError::bad_request(format!("missing field {name}")));
    let target = TargetUpload {
        mesh_obj: required("target_mesh")?,
        weights_json: required("target_weights")?,
    };
    let source = SourceUpload {
        mesh_obj: fields.remove("source_mesh"),
        skeletal_weights_json: fields.remove("source_weights"),
        part_weights_json: fields.remove("source_part_weights"),
        clip_json: fields.remove("clip"),
        video,
    };
    let requested = fields.remove("id");

    let worker = app.clone();
    let (project, summary) = blocking(move || {
        let store = &worker.inner.store;
        let _serial = worker.inner.create.lock().unwrap();
        let id = match requested {
            Some(id) => {
                store.project_dir(&id)?;
                if store.exists(&id) {
                    return Err(PipelineError::InvalidId(format!("{id} (already exists)")));
                }
                id
            }
            None => store.next_id()?,
        };
        let project = create_project(id, &source, &target)?;
        store.save(&project)?;
        let summary = ProjectSummary::of(&project);
        Ok((project, summary))
    })
    .await?;
    tracing::info!(id = %summary.id, "project created");
    app.inner
        .projects
        .lock()
        .unwrap()
        .insert(summary.id.clone(), Arc::new(RwLock::new(project)));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list(State(app): State<App>) -> Result<Json<Value>, ApiError> {
    let worker = app.clone();
    let ids = blocking(move || worker.inner.store.list()).await?;
    Ok(Json(json!({ "projects": ids })))
}

async fn summary(State(app): State<App>, Path(id): Path<String>) -> Result<Json<ProjectSummary>, ApiError> {
    let lock = app.project(&id).await?;
    let project = lock.read().await;
    Ok(Json(ProjectSummary::of(&project)))
}

#[derive(Deserialize)]
struct StageBody {
    stage: Stage,
}

async fn set_stage(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Json<ProjectSummary>, ApiError> {
    let StageBody { stage } = parse_json(&body)?;
    let ((), summary) = app
        .mutate(&id, move |p, store| {
            p.set_stage(stage)?;
            store.save_state(p)
        })
        .await?;
    Ok(Json(summary))
}

/// Body is an optional `{"video", "duration"}`; the uploaded video
/// reference is used when it is empty.
async fn mocap(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Json<ProjectSummary>, ApiError> {
    let request: Option<MoCapRequest> = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        Some(parse_json(&body)?)
    };
    let client = app.inner.mocap.clone();
    let ((), summary) = app
        .mutate(&id, move |p, store| {
            let request = match request.or_else(|| p.source().video.clone()) {
                Some(r) => r,
                None => return Err(PipelineError::Bundle("no video to capture; send {\"video\", \"duration\"}".into())),
            };
            p.run_mocap(&request, client.as_ref())?;
            store.save(p)
        })
        .await?;
    Ok(Json(summary))
}

async fn pose_edit(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Json<ProjectSummary>, ApiError> {
    let record: JointEditRecord = parse_json(&body)?;
    let edit = JointEdit::try_from(record).map_err(|source| PipelineError::Clip { what: "pose edit", source })?;
    let ((), summary) = app
        .mutate(&id, move |p, store| {
            p.apply_pose_edit(&edit)?;
            store.save_state(p)
        })
        .await?;
    Ok(Json(summary))
}

/// `{"vertices": [ids], "label": k}` with an optional `"config"`.
#[derive(Deserialize)]
struct WeightEditBody {
    #[serde(flatten)]
    command: EditCommand,
    #[serde(default)]
    config: Option<ConverterConfig>,
}

async fn weight_edit(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Json<ProjectSummary>, ApiError> {
    let WeightEditBody { command, config } = parse_json(&body)?;
    let config = config.unwrap_or(app.inner.converter);
    let ((), summary) = app
        .mutate(&id, move |p, store| {
            p.apply_weight_edit(&command, &config)?;
            store.save_state(p)
        })
        .await?;
    Ok(Json(summary))
}

/// Answers 200 with a finished job on a cache hit, otherwise starts the
/// transfer in the background and answers 202; poll `GET .../motrans`.
async fn start_motrans(State(app): State<App>, Path(id): Path<String>) -> Result<(StatusCode, Json<Job>), ApiError> {
    let lock = app.project(&id).await?;
    let mut project = lock.clone().write_owned().await;
    let key = project.cache_key()?;

    if let Some(hit) = project.cached_result(&key) {
        let frame_count = hit.frames.len();
        project.install_result(hit);
        let worker = app.clone();
        blocking(move || worker.inner.store.save_state(&project)).await?;
        let job = Job::Done {
            key,
            cache_hit: true,
            frame_count,
        };
        app.set_job(&id, job.clone());
        return Ok((StatusCode::OK, Json(job)));
    }
    if let Some(running @ Job::Running { .. }) = app.job(&id) {
        if running.key() == &key {
            return Ok((StatusCode::ACCEPTED, Json(running)));
        }
    }

    let snapshot = project.clone();
    drop(project);
    let job = Job::Running { key: key.clone() };
    app.set_job(&id, job.clone());
    tracing::info!(%id, frames = ?snapshot.clip().map(|c| c.frame_count()), "transfer started");
    tokio::spawn(async move {
        let job_key = key.clone();
        let computed = tokio::task::spawn_blocking(move || snapshot.compute_motrans(key)).await;
        let outcome = match computed {
            Ok(Ok(result)) => {
                let result = Arc::new(result);
                let mut project = lock.write_owned().await;
                project.install_result(result.clone());
                let worker = app.clone();
                let saved = tokio::task::spawn_blocking(move || worker.inner.store.save_state(&project)).await;
                if let Ok(Err(e)) = saved {
                    tracing::warn!(%id, "saving state after transfer: {e}");
                }
                Job::Done {
                    key: job_key.clone(),
                    cache_hit: false,
                    frame_count: result.frames.len(),
                }
            }
            Ok(Err(e)) => Job::Failed {
                key: job_key.clone(),
                error: e.to_string(),
            },
            Err(e) => Job::Failed {
                key: job_key.clone(),
                error: format!("worker failed: {e}"),
            },
        };
        tracing::info!(%id, status = ?outcome, "transfer finished");
        let mut jobs = app.inner.jobs.lock().unwrap();
        // a newer request may have replaced this job
        if jobs.get(&id).is_some_and(|j| j.key() == &job_key) {
            jobs.insert(id, outcome);
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

/// Latest job for the project plus whether its key matches the current
/// edit state.
async fn motrans_status(State(app): State<App>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let lock = app.project(&id).await?;
    let current = lock.read().await.cache_key().ok();
    let Some(job) = app.job(&id) else {
        return Ok(Json(json!({"status": "idle", "current": false})));
    };
    let mut value = serde_json::to_value(&job).expect("job serializes");
    value["current"] = json!(current.as_ref() == Some(job.key()));
    Ok(Json(value))
}

#[derive(Deserialize)]
struct FrameQuery {
    format: Option<String>,
}

/// OBJ text, or `{"frame", "frame_count", "positions": [x0, y0, z0, x1, ...]}`.
async fn frame(
    State(app): State<App>,
    Path((id, n)): Path<(String, String)>,
    Query(query): Query<FrameQuery>,
) -> Result<Response, ApiError> {
    let n = parse_index("frame", &n)?;
    let lock = app.project(&id).await?;
    let project = lock.read().await;
    let mesh = project.frame(n)?;
    let frame_count = project.latest_result().map_or(0, |r| r.frames.len());
    match query.format.as_deref().unwrap_or("obj") {
        "obj" => Ok(([(header::CONTENT_TYPE, "model/obj")], meshmotion::mesh::serialize_obj(&mesh)).into_response()),
        "json" => Ok(Json(frame_json(&mesh, n, frame_count)).into_response()),
        other => Err(ApiError::bad_request(format!("format must be obj or json, got {other:?}"))),
    }
}

/// Compact frame body: `{"frame", "frame_count", "positions": [x0, y0, z0, x1, ...]}`.
pub fn frame_json(mesh: &Mesh, frame: usize, frame_count: usize) -> Value {
    let positions: Vec<f64> = mesh.vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    json!({"frame": frame, "frame_count": frame_count, "positions": positions})
}

fn label_layer(weights: &SkinningWeights, colors: Vec<[u8; 3]>) -> Value {
    let labels: Vec<usize> = (0..weights.vertex_count()).map(|v| argmax_label(weights, v).0).collect();
    json!({"labels": labels, "colors": colors})
}

/// Palette plus per-vertex dominant labels and colors for both characters.
pub fn labels_json(project: &Project) -> Value {
    let (palette, source_colors, target_colors) = project.label_colors();
    let palette: Vec<Value> = (0..project.part_count())
        .map(|k| json!({"label": k, "rgb": palette.get(PartLabel(k))}))
        .collect();
    let source = match (project.source().transfer_weights(), source_colors) {
        (Some(w), Some(colors)) => label_layer(w, colors),
        _ => Value::Null,
    };
    json!({
        "part_count": project.part_count(),
        "palette": palette,
        "source": source,
        "target": label_layer(project.target_weights(), target_colors),
    })
}

pub fn correspondence_json(project: &Project, label: usize) -> Result<Value, PipelineError> {
    let (source, target) = project.highlight_correspondence(PartLabel(label))?;
    Ok(json!({"label": label, "source": source, "target": target}))
}

async fn labels(State(app): State<App>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let lock = app.project(&id).await?;
    let project = lock.read().await;
    Ok(Json(labels_json(&project)))
}

async fn correspondence(State(app): State<App>, Path((id, k)): Path<(String, String)>) -> Result<Json<Value>, ApiError> {
    let k = parse_index("label", &k)?;
    let lock = app.project(&id).await?;
    let body = correspondence_json(&*lock.read().await, k)?;
    Ok(Json(body))
}

fn export_dir(store: &ProjectStore, id: &str) -> Result<PathBuf, PipelineError> {
    Ok(store.project_dir(id)?.join(EXPORT_DIR))
}

/// Writes the current results under the project directory and answers the
/// manifest; files are served from `.../export/{file}`.
async fn export(State(app): State<App>, Path(id): Path<String>) -> Result<Json<meshmotion::pipeline::Manifest>, ApiError> {
    let (manifest, _) = app
        .mutate(&id, |p, store| {
            let dir = export_dir(store, p.id())?;
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
            }
            let manifest = p.export(&dir)?;
            store.save_state(p)?;
            Ok(manifest)
        })
        .await?;
    Ok(Json(manifest))
}

async fn export_file(State(app): State<App>, Path((id, file)): Path<(String, String)>) -> Result<Response, ApiError> {
    let lock = app.project(&id).await?;
    let _reading = lock.read().await;
    let plain = !file.is_empty() && !file.starts_with('.') && file.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
    if !plain {
        return Err(ApiError::bad_request(format!("bad file name {file:?}")));
    }
    let path = export_dir(app.store(), &id)?.join(&file);
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no exported file {file}")))?;
    let kind = if file.ends_with(".obj") { "model/obj" } else { "application/json" };
    Ok(([(header::CONTENT_TYPE, kind)], bytes).into_response())
}
