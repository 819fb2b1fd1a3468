//! HTTP job API over a scene store directory.
//!
//! Reads are served directly from disk; generation and edits are queued as
//! jobs and run on blocking workers, at most `workers` at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::error::{Error, Result};
use crate::layout::LayoutBox;
use crate::pipeline::{
    edit_scene, run_full, validate_edit, ConditionRef, EditRequest, GenerateOptions, Models, SceneRecord, SceneState,
};
use crate::synthdata::{generate_sample, Category};

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Generate,
    Edit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    /// Allowed moves: queued to running, running to done or failed.
    pub fn can_move_to(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running) | (JobStatus::Running, JobStatus::Done | JobStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub version: u32,
    pub job_id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub scene_id: Option<String>,
    pub progress: f64,
    pub error: Option<String>,
}

impl JobRecord {
    fn advance(&mut self, next: JobStatus) {
        assert!(
            self.status.can_move_to(next),
            "job {} cannot move from {:?} to {:?}",
            self.job_id,
            self.status,
            next
        );
        self.status = next;
        if next.is_terminal() {
            self.progress = 1.0;
        }
    }
}

/// Shared server state.
pub struct ServerState {
    pub models: Arc<Models>,
    pub store: PathBuf,
    pub options: GenerateOptions,
    jobs: Mutex<BTreeMap<String, JobRecord>>,
    /// Scenes with a queued or running job.
    busy: Mutex<BTreeSet<String>>,
    next_job: AtomicU64,
    limiter: Arc<Semaphore>,
}

impl ServerState {
    pub fn new(models: Models, store: PathBuf, options: GenerateOptions, workers: usize) -> Arc<Self> {
        Arc::new(ServerState {
            models: Arc::new(models),
            store,
            options,
            jobs: Mutex::new(BTreeMap::new()),
            busy: Mutex::new(BTreeSet::new()),
            next_job: AtomicU64::new(1),
            limiter: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.jobs.lock().expect("job table").get(id).cloned()
    }

    fn scene_dir(&self, id: &str) -> Option<PathBuf> {
        let safe = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        safe.then(|| self.store.join(id))
    }

    fn enqueue(&self, kind: JobKind, scene_id: Option<String>) -> JobRecord {
        let n = self.next_job.fetch_add(1, Ordering::SeqCst);
        let rec = JobRecord {
            version: API_VERSION,
            job_id: format!("job-{n}"),
            kind,
            status: JobStatus::Queued,
            scene_id,
            progress: 0.0,
            error: None,
        };
        self.jobs.lock().expect("job table").insert(rec.job_id.clone(), rec.clone());
        rec
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(rec) = self.jobs.lock().expect("job table").get_mut(id) {
            f(rec);
        }
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    op_index: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            op_index: None,
        }
    }

    fn not_found(what: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownPart(_)
            | Error::InvalidEdit(_)
            | Error::DegenerateBox(_)
            | Error::Geometry(_)
            | Error::UnknownCategory(_)
            | Error::InvalidArgument(_)
            | Error::OutOfRange(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "version": API_VERSION,
            "error": self.code,
            "message": self.message,
            "op_index": self.op_index,
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Deserialize)]
pub struct GenerateBody {
    /// Condition on this category's synthetic object; absent means unconditional.
    pub category: Option<Category>,
    #[serde(default)]
    pub sample_seed: u64,
    pub seed: u64,
    /// Explicit layout; skips the layout stage.
    pub boxes: Option<Vec<LayoutBox>>,
    /// Use the conditioning object's own boxes.
    #[serde(default)]
    pub gt_boxes: bool,
}

fn accepted(rec: JobRecord) -> Response {
    (StatusCode::ACCEPTED, Json(rec)).into_response()
}

async fn post_generate(State(st): State<Arc<ServerState>>, Json(body): Json<GenerateBody>) -> ApiResult<Response> {
    let condition = match body.category {
        Some(category) => ConditionRef::Sample {
            category,
            seed: body.sample_seed,
        },
        None => ConditionRef::Unconditional,
    };
    let boxes = match (&body.boxes, body.gt_boxes) {
        (Some(_), true) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_argument",
                "give either boxes or gt_boxes",
            ))
        }
        (Some(b), false) => Some(b.iter().map(|b| b.aabb()).collect::<Result<Vec<_>>>()?),
        (None, true) => match body.category {
            Some(c) => Some(generate_sample(body.sample_seed, c).boxes()),
            None => {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_argument",
                    "gt_boxes needs a category",
                ))
            }
        },
        (None, false) => None,
    };
    if boxes.is_none() && st.models.layout.is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_argument",
            "no layout checkpoint loaded; pass boxes",
        ));
    }
    let rec = st.enqueue(JobKind::Generate, None);
    let job_id = rec.job_id.clone();
    let seed = body.seed;
    spawn_job(st, job_id, None, move |st| {
        let scene = run_full(&st.models, &condition, boxes.as_deref(), seed, &st.options)?;
        let dir = st
            .scene_dir(&scene.scene_id)
            .ok_or_else(|| Error::InvalidArgument("bad scene id".into()))?;
        scene.save(&dir)?;
        Ok(scene.scene_id)
    });
    Ok(accepted(rec))
}

async fn post_edit(
    State(st): State<Arc<ServerState>>,
    Path(id): Path<String>,
    Json(req): Json<EditRequest>,
) -> ApiResult<Response> {
    let dir = st.scene_dir(&id).ok_or_else(|| ApiError::not_found("scene"))?;
    if !dir.join(crate::pipeline::SCENE_FILE).exists() {
        return Err(ApiError::not_found("scene"));
    }
    if st.busy.lock().expect("busy set").contains(&id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "scene_busy",
            format!("scene {id} has a running job"),
        ));
    }
    let state = SceneState::load(&dir)?;
    if let Err((op, e)) = validate_edit(&state, &req) {
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), op.message);
        err.op_index = op.op_index;
        return Err(err);
    }
    {
        let mut busy = st.busy.lock().expect("busy set");
        if !busy.insert(id.clone()) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "scene_busy",
                format!("scene {id} has a running job"),
            ));
        }
    }
    let rec = st.enqueue(JobKind::Edit, Some(id.clone()));
    let job_id = rec.job_id.clone();
    spawn_job(st, job_id, Some(id), move |st| {
        let next = edit_scene(&st.models, &state, &req)?;
        next.save(&dir)?;
        Ok(next.scene_id)
    });
    Ok(accepted(rec))
}

/// Runs `work` on a blocking worker once a slot is free and records the outcome.
fn spawn_job(
    st: Arc<ServerState>,
    job_id: String,
    scene: Option<String>,
    work: impl FnOnce(&ServerState) -> Result<String> + Send + 'static,
) {
    tokio::spawn(async move {
        let permit = st.limiter.clone().acquire_owned().await.expect("semaphore open");
        st.update(&job_id, |r| r.advance(JobStatus::Running));
        let st2 = st.clone();
        let outcome = tokio::task::spawn_blocking(move || work(&st2)).await;
        drop(permit);
        st.update(&job_id, |r| match outcome {
            Ok(Ok(scene_id)) => {
                r.scene_id = Some(scene_id);
                r.advance(JobStatus::Done);
            }
            Ok(Err(e)) => {
                r.error = Some(format!("{}: {e}", e.code()));
                r.advance(JobStatus::Failed);
            }
            Err(e) => {
                r.error = Some(format!("worker panicked: {e}"));
                r.advance(JobStatus::Failed);
            }
        });
        if let Some(s) = scene {
            st.busy.lock().expect("busy set").remove(&s);
        }
    });
}

async fn get_job(State(st): State<Arc<ServerState>>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    st.job(&id).map(Json).ok_or_else(|| ApiError::not_found("job"))
}

async fn get_scene(State(st): State<Arc<ServerState>>, Path(id): Path<String>) -> ApiResult<Json<SceneRecord>> {
    let dir = st.scene_dir(&id).ok_or_else(|| ApiError::not_found("scene"))?;
    if !dir.join(crate::pipeline::SCENE_FILE).exists() {
        return Err(ApiError::not_found("scene"));
    }
    Ok(Json(SceneRecord::read(&dir)?))
}

async fn get_mesh(State(st): State<Arc<ServerState>>, Path((id, part)): Path<(String, usize)>) -> ApiResult<Response> {
    let dir = st.scene_dir(&id).ok_or_else(|| ApiError::not_found("scene"))?;
    if !dir.join(crate::pipeline::SCENE_FILE).exists() {
        return Err(ApiError::not_found("scene"));
    }
    let rec = SceneRecord::read(&dir)?;
    let p = rec
        .parts
        .iter()
        .find(|p| p.part_id == part)
        .ok_or_else(|| ApiError::not_found("part"))?;
    let path = dir.join(&p.files.ply);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], Body::from(bytes)).into_response())
}

async fn fallback() -> ApiError {
    ApiError::not_found("route")
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/api/generate", post(post_generate))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/scenes/{id}", get(get_scene))
        .route("/api/scenes/{id}/parts/{part}/mesh", get(get_mesh))
        .route("/api/scenes/{id}/edit", post(post_edit))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: &str, state: Arc<ServerState>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr, e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(state)).await.map_err(|e| Error::io(addr, e))
}
