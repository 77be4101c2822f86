//! Job-based HTTP service.
//!
//! Uploaded images and jobs live under the data directory:
//! `images/<image_id>` holds the raw upload, `jobs/<job_id>/` holds
//! `config.json`, `status.json`, `result.json` and the CLI output files.
//! Jobs run on a blocking worker pool bounded by a semaphore.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use uuid::Uuid;

use starseg::config::RunConfig;
use starseg::imageio::{decode_raster, load_image_bytes};
use starseg::multilevel::run_multilevel;

use crate::outputs::{write_outputs, ResultPayload};

/// Largest accepted request body.
pub const MAX_UPLOAD: usize = 16 * 1024 * 1024;
pub const DEFAULT_WORKERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
    Stalled,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed | JobStatus::Stalled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub level: usize,
    pub iter: usize,
    pub residual_inf: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub image_id: String,
    pub status: JobStatus,
    pub progress: Option<Progress>,
    /// Path of the result resource once the job has one.
    pub result: Option<String>,
    /// Failure reason for `failed` jobs.
    pub reason: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateJob {
    image_id: String,
    config: RunConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

struct Job {
    record: JobRecord,
    cancel: Arc<AtomicBool>,
}

pub struct AppState {
    data_dir: PathBuf,
    jobs: Mutex<HashMap<String, Job>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    /// Opens (or creates) a data directory. Jobs that were queued or running
    /// when the previous process stopped are marked failed.
    pub fn open(data_dir: &Path, workers: usize) -> std::io::Result<Arc<Self>> {
        fs::create_dir_all(data_dir.join("images"))?;
        fs::create_dir_all(data_dir.join("jobs"))?;
        let mut jobs = HashMap::new();
        for entry in fs::read_dir(data_dir.join("jobs"))? {
            let dir = entry?.path();
            let Ok(text) = fs::read_to_string(dir.join("status.json")) else {
                continue;
            };
            let Ok(mut record) = serde_json::from_str::<JobRecord>(&text) else {
                warn!("skipping unreadable job record in {}", dir.display());
                continue;
            };
            if !record.status.is_terminal() {
                record.status = JobStatus::Failed;
                record.reason = Some("interrupted by service restart".into());
                write_status(data_dir, &record)?;
            }
            jobs.insert(record.job_id.clone(), Job { record, cancel: Arc::new(AtomicBool::new(false)) });
        }
        Ok(Arc::new(AppState {
            data_dir: data_dir.to_path_buf(),
            jobs: Mutex::new(jobs),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }))
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.data_dir.join("jobs").join(id)
    }

    fn image_path(&self, id: &str) -> Option<PathBuf> {
        Uuid::parse_str(id).ok()?;
        Some(self.data_dir.join("images").join(id))
    }

    fn record(&self, id: &str) -> Result<JobRecord, ApiError> {
        let jobs = self.jobs.lock().unwrap();
        jobs.get(id)
            .map(|j| j.record.clone())
            .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))
    }

    /// Applies `f` to a job record and persists it, unless the job already
    /// reached a terminal status. Progress-only changes stay in memory.
    fn update(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        self.modify(id, true, f)
    }

    fn modify(&self, id: &str, persist: bool, f: impl FnOnce(&mut JobRecord)) {
        let mut jobs = self.jobs.lock().unwrap();
        if let Some(job) = jobs.get_mut(id) {
            if job.record.status.is_terminal() {
                return;
            }
            f(&mut job.record);
            if persist {
                if let Err(e) = write_status(&self.data_dir, &job.record) {
                    warn!("job {id}: cannot persist status: {e}");
                }
            }
        }
    }
}

fn write_status(data_dir: &Path, record: &JobRecord) -> std::io::Result<()> {
    let dir = data_dir.join("jobs").join(&record.job_id);
    let tmp = dir.join("status.json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(record).expect("record serializes"))?;
    fs::rename(tmp, dir.join("status.json"))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/images", post(upload_image))
        .route("/api/v1/jobs", post(create_job))
        .route("/api/v1/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/api/v1/jobs/{id}/result", get(get_result))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

async fn upload_image(State(state): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    decode_raster(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let id = Uuid::new_v4().to_string();
    let path = state.image_path(&id).expect("fresh uuid");
    tokio::fs::write(path, &body).await?;
    info!("stored image {id} ({} bytes)", body.len());
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "image_id": id }))))
}

async fn create_job(State(state): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateJob = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    req.config.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let image = state
        .image_path(&req.image_id)
        .filter(|p| p.is_file())
        .ok_or_else(|| ApiError::NotFound(format!("unknown image {}", req.image_id)))?;

    let id = Uuid::new_v4().to_string();
    let dir = state.job_dir(&id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), req.config.to_json())?;
    let record = JobRecord {
        job_id: id.clone(),
        image_id: req.image_id,
        status: JobStatus::Queued,
        progress: None,
        result: None,
        reason: None,
    };
    write_status(&state.data_dir, &record)?;
    let cancel = Arc::new(AtomicBool::new(false));
    state
        .jobs
        .lock()
        .unwrap()
        .insert(id.clone(), Job { record, cancel: cancel.clone() });
    tokio::spawn(run_job(state.clone(), id.clone(), image, req.config, cancel));
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "job_id": id }))))
}

async fn get_job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<JobRecord>, ApiError> {
    state.record(&id).map(Json)
}

async fn get_result(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = state.record(&id)?;
    match record.status {
        JobStatus::Queued | JobStatus::Running => {
            Err(ApiError::Conflict(format!("job {id} is {:?}; no result yet", record.status).to_lowercase()))
        }
        JobStatus::Failed => Err(ApiError::Conflict(format!(
            "job {id} failed ({}); no result available",
            record.reason.unwrap_or_default()
        ))),
        JobStatus::Done | JobStatus::Stalled => {
            let text = tokio::fs::read(state.job_dir(&id).join("result.json")).await?;
            Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], text).into_response())
        }
    }
}

async fn cancel_job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<JobRecord>, ApiError> {
    {
        let jobs = state.jobs.lock().unwrap();
        let job = jobs.get(&id).ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))?;
        job.cancel.store(true, Ordering::SeqCst);
    }
    state.update(&id, |r| {
        r.status = JobStatus::Failed;
        r.reason = Some("cancelled".into());
    });
    state.record(&id).map(Json)
}

async fn run_job(state: Arc<AppState>, id: String, image: PathBuf, cfg: RunConfig, cancel: Arc<AtomicBool>) {
    let Ok(_permit) = state.workers.clone().acquire_owned().await else {
        return;
    };
    if cancel.load(Ordering::SeqCst) {
        return;
    }
    state.update(&id, |r| r.status = JobStatus::Running);
    let worker_state = state.clone();
    let worker_id = id.clone();
    let outcome = tokio::task::spawn_blocking(move || execute(&worker_state, &worker_id, &image, &cfg, &cancel)).await;
    let outcome = outcome.unwrap_or_else(|e| Err(format!("worker panicked: {e}")));
    match &outcome {
        Ok(stalled) => info!("job {id} finished (stalled: {stalled})"),
        Err(reason) => warn!("job {id} failed: {reason}"),
    }
    state.update(&id, |r| match outcome {
        Ok(stalled) => {
            r.status = if stalled { JobStatus::Stalled } else { JobStatus::Done };
            r.result = Some(format!("/api/v1/jobs/{id}/result"));
        }
        Err(reason) => {
            r.status = JobStatus::Failed;
            r.reason = Some(reason);
        }
    });
}

/// Runs one job to completion; returns whether it stalled.
fn execute(state: &AppState, id: &str, image: &Path, cfg: &RunConfig, cancel: &AtomicBool) -> Result<bool, String> {
    let bytes = fs::read(image).map_err(|e| e.to_string())?;
    let grid = load_image_bytes(&bytes, cfg.size).map_err(|e| e.to_string())?;
    let mut monitor = |row: &starseg::solver::TraceRow| {
        state.modify(id, false, |r| {
            r.progress = Some(Progress {
                level: row.level,
                iter: row.iter,
                residual_inf: row.residual_inf,
                energy: row.energy,
            })
        });
        !cancel.load(Ordering::SeqCst)
    };
    let res = run_multilevel(&grid, cfg, &mut monitor).map_err(|e| e.to_string())?;
    let dir = state.job_dir(id);
    write_outputs(&dir, &grid, &res).map_err(|e| e.to_string())?;
    let payload = ResultPayload::from_result(&res).map_err(|e| e.to_string())?;
    fs::write(dir.join("result.json"), serde_json::to_vec(&payload).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok(res.stalled)
}
