//! HTTP facade over the alignment pipeline.
//!
//! Sessions hold a reference/target pair, an optional template mask and the
//! two areas of interest. Registration runs as a queued job that executes the
//! whole pipeline and stores its artifacts in the session directory, byte for
//! byte what the command-line `run-all` writes for the same inputs.

pub mod error;
pub mod jobs;
pub mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::{mpsc, Mutex as AsyncMutex};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use uuid::Uuid;

use gcxgc_core::io::parse_mask;
use gcxgc_core::pipeline::{
    self, AtStage, PipelineConfig, Stage, StageError, ALIGNED_IMAGE, ALIGNED_SIDECAR, PEAKS_REF,
    PEAKS_TARGET, QUANT, QUANT_BLOBS, QUANT_TABLE, REGISTRATION_REPORT, SCORES, TRANSFORM,
    WARNINGS, WARPED_MASK,
};

use crate::error::{ApiError, ApiResult};
use crate::jobs::{Job, JobStatus, JobTable, RegisterRequest};
use crate::store::{parse_aoi_body, CreateSession, Session, Store, Which};

/// Artifact kinds served under `/sessions/{id}/artifacts/{kind}`.
pub const ARTIFACT_KINDS: &[(&str, &str, &str)] = &[
    ("peaks-ref", PEAKS_REF, "text/csv"),
    ("peaks-target", PEAKS_TARGET, "text/csv"),
    ("warped-mask", WARPED_MASK, "text/plain; charset=utf-8"),
    ("aligned-image", ALIGNED_IMAGE, "image/png"),
    ("aligned-image-meta", ALIGNED_SIDECAR, "application/json"),
    ("scores", SCORES, "application/json"),
    ("quant", QUANT, "text/csv"),
    ("quant-blobs", QUANT_BLOBS, "text/csv"),
    ("quant-table", QUANT_TABLE, "text/plain; charset=utf-8"),
    ("registration", REGISTRATION_REPORT, "application/json"),
    ("transform", TRANSFORM, "application/json"),
    ("warnings", WARNINGS, "application/json"),
];

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Number of jobs executed at once.
    pub workers: usize,
    /// Allowed browser origin; any origin when absent.
    pub ui_origin: Option<String>,
    pub max_body_bytes: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            workers: 1,
            ui_origin: None,
            max_body_bytes: 256 << 20,
        }
    }
}

pub struct AppState {
    pub store: Store,
    pub jobs: JobTable,
    queue: mpsc::UnboundedSender<Uuid>,
}

/// Opens the store, starts the job workers and returns the router.
/// Must be called inside a Tokio runtime.
pub fn build(cfg: &ServiceConfig) -> Result<(Router, Arc<AppState>), gcxgc_core::Error> {
    let store = Store::open(&cfg.data_dir)?;
    let (tx, rx) = mpsc::unbounded_channel();
    let state = Arc::new(AppState {
        store,
        jobs: JobTable::default(),
        queue: tx,
    });
    let rx = Arc::new(AsyncMutex::new(rx));
    for _ in 0..cfg.workers.max(1) {
        tokio::spawn(worker(state.clone(), rx.clone()));
    }
    let cors = match &cfg.ui_origin {
        Some(origin) => CorsLayer::new()
            .allow_origin(AllowOrigin::exact(HeaderValue::from_str(origin).map_err(
                |e| gcxgc_core::Error::InvalidParameter(format!("ui origin: {e}")),
            )?)),
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    let router = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/grids/{which}", get(get_grid))
        .route("/sessions/{id}/aoi/{which}", put(put_aoi).get(get_aoi))
        .route("/sessions/{id}/register", post(submit_job))
        .route("/sessions/{id}/artifacts/{kind}", get(get_artifact))
        .route("/sessions/{id}/mask", put(put_mask))
        .route("/jobs/{id}", get(get_job))
        .layer(DefaultBodyLimit::max(cfg.max_body_bytes))
        .layer(cors)
        .with_state(state.clone());
    Ok((router, state))
}

async fn worker(state: Arc<AppState>, rx: Arc<AsyncMutex<mpsc::UnboundedReceiver<Uuid>>>) {
    loop {
        let next = rx.lock().await.recv().await;
        let Some(id) = next else {
            break;
        };
        let Some(job) = state.jobs.get(&id) else {
            continue;
        };
        state.jobs.advance(&id, JobStatus::Running, None, None);
        let st = state.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&st, &job)).await;
        match outcome {
            Ok(Ok(summary)) => {
                state
                    .jobs
                    .advance(&id, JobStatus::Done, Some(summary), None);
            }
            Ok(Err(e)) => {
                let doc: Value = serde_json::from_str(&e.to_json()).expect("stage error is json");
                state.jobs.advance(&id, JobStatus::Error, None, Some(doc));
            }
            Err(join) => {
                let doc = json!({"stage": "register", "category": "internal", "message": join.to_string()});
                state.jobs.advance(&id, JobStatus::Error, None, Some(doc));
            }
        }
    }
}

/// Runs the whole pipeline for a job and replaces the session artifacts.
fn execute(state: &AppState, job: &Job) -> Result<Value, StageError> {
    let session = state
        .store
        .get(&job.session.to_string())
        .map_err(|e| StageError {
            stage: Stage::Load,
            error: gcxgc_core::Error::InvalidParameter(e.message),
        })?;
    let cfg: PipelineConfig = job.request.pipeline().at(Stage::Load)?;
    let inputs = {
        let _w = session.lock();
        session.inputs().at(Stage::Load)?
    };
    let out = pipeline::run_all(&inputs, &cfg)?;
    {
        let _w = session.lock();
        session.clear_artifacts().at(Stage::Write)?;
        session.store_artifacts(&out.artifacts).at(Stage::Write)?;
    }
    let registration: Value =
        serde_json::from_str(&out.registered.report_json).expect("report is json");
    Ok(json!({
        "registration": registration,
        "scores": out.scores,
        "peaks": {"reference": out.reference_peaks.len(), "target": out.target_peaks.len()},
    }))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "parse", e.body_text()))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<Response> {
    let req = body(payload)?;
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || st.store.create(&req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!({"id": session.id}))).into_response())
}

fn ready_kinds(session: &Session) -> Vec<&'static str> {
    ARTIFACT_KINDS
        .iter()
        .filter(|(_, file, _)| session.artifact_path(file).exists())
        .map(|(kind, _, _)| *kind)
        .collect()
}

async fn session_summary(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let s = state.store.get(&id)?;
    Ok(Json(json!({
        "id": s.id,
        "mask": s.has_template(),
        "aoi": {
            "ref": s.aoi_path(Which::Reference).exists(),
            "target": s.aoi_path(Which::Target).exists(),
        },
        "jobs": state.jobs.for_session(s.id),
        "artifacts": ready_kinds(&s),
    })))
}

fn content_type_of(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("bmp") => "image/bmp",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "text/csv",
    }
}

async fn get_grid(
    State(state): State<Arc<AppState>>,
    Path((id, which)): Path<(String, String)>,
) -> ApiResult<Response> {
    let s = state.store.get(&id)?;
    let path = s.grid_path(Which::parse(&which)?);
    let bytes = std::fs::read(&path).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type_of(&path))], bytes).into_response())
}

async fn put_aoi(
    State(state): State<Arc<AppState>>,
    Path((id, which)): Path<(String, String)>,
    text: String,
) -> ApiResult<StatusCode> {
    let s = state.store.get(&id)?;
    let which = Which::parse(&which)?;
    let aoi = parse_aoi_body(&text)?;
    let _w = s.lock();
    s.store_aoi(which, &aoi)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_aoi(
    State(state): State<Arc<AppState>>,
    Path((id, which)): Path<(String, String)>,
) -> ApiResult<Response> {
    let s = state.store.get(&id)?;
    let path = s.aoi_path(Which::parse(&which)?);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| ApiError::not_found(format!("no area of interest for {which}")))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn submit_job(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<RegisterRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let s = state.store.get(&id)?;
    let req = body(payload)?;
    req.pipeline().map_err(ApiError::invalid)?;
    let job = state.jobs.insert(s.id, req);
    state
        .queue
        .send(job.id)
        .map_err(|_| ApiError::internal("job queue closed"))?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"job": job.id, "status": job.status})),
    )
        .into_response())
}

async fn get_job(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Job>> {
    Uuid::parse_str(&id)
        .ok()
        .and_then(|id| state.jobs.get(&id))
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))
}

async fn get_artifact(
    State(state): State<Arc<AppState>>,
    Path((id, kind)): Path<(String, String)>,
) -> ApiResult<Response> {
    let s = state.store.get(&id)?;
    let (_, file, mime) = ARTIFACT_KINDS
        .iter()
        .find(|(k, _, _)| *k == kind)
        .ok_or_else(|| ApiError::not_found(format!("unknown artifact kind {kind:?}")))?;
    let bytes = {
        let _w = s.lock();
        s.read_artifact(file)
    }
    .ok_or_else(|| ApiError::not_ready(format!("{kind} is not available yet")))?;
    Ok(([(header::CONTENT_TYPE, *mime)], Bytes::from(bytes)).into_response())
}

/// Replaces the warped mask with an edited one and re-quantifies.
async fn put_mask(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    text: String,
) -> ApiResult<Json<Value>> {
    let s = state.store.get(&id)?;
    let edited = parse_mask::<f64>(&text).map_err(ApiError::invalid)?;
    let report = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let _w = s.lock();
        if !s.artifact_path(WARPED_MASK).exists() {
            return Err(ApiError::not_ready(
                "no warped mask to replace; run a registration first",
            ));
        }
        let target = s.load_grid(Which::Target)?;
        let reference = match s.load_template()? {
            Some(m) => Some((s.load_grid(Which::Reference)?, m)),
            None => None,
        };
        let (report, mut set) =
            pipeline::quant_files(&target, &edited, reference.as_ref().map(|(g, m)| (g, m)))?;
        set.push(WARPED_MASK, gcxgc_core::io::mask_to_string(&edited));
        s.store_artifacts(&set)?;
        Ok(report)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(
        json!({"blobs": report.blobs, "families": report.families, "warnings": report.warnings}),
    ))
}
