//! JSON HTTP API over a read-only model and a mutable decision policy.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use cmad::data::{Image, Sample};
use cmad::detector::{AnomalyReport, Detector, PolicyConfig};
use cmad::eval::{load_dataset, run_benchmark, BenchmarkReport};
use cmad::RunConfig;

use crate::render::{render, score_and_render, Rendered};

/// Overlays kept for `GET /api/images/{id}/overlay`.
pub const OVERLAY_CAPACITY: usize = 64;

#[derive(Default)]
struct OverlayCache {
    png: HashMap<String, Arc<Vec<u8>>>,
    order: VecDeque<String>,
}

impl OverlayCache {
    fn insert(&mut self, id: String, png: Vec<u8>) {
        if self.png.insert(id.clone(), Arc::new(png)).is_none() {
            self.order.push_back(id);
        }
        while self.order.len() > OVERLAY_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.png.remove(&old);
            }
        }
    }
}

/// The model is shared immutably; the policy has one writer at a time.
pub struct AppState {
    detector: Arc<Detector>,
    policy: RwLock<PolicyConfig>,
    overlays: Mutex<OverlayCache>,
    uploads: Mutex<u64>,
}

impl AppState {
    pub fn new(detector: Detector, policy: PolicyConfig) -> Arc<Self> {
        Arc::new(Self {
            detector: Arc::new(detector),
            policy: RwLock::new(policy),
            overlays: Mutex::new(OverlayCache::default()),
            uploads: Mutex::new(0),
        })
    }

    pub fn policy(&self) -> PolicyConfig {
        self.policy.read().expect("policy lock").clone()
    }

    fn upload_id(&self) -> String {
        let mut n = self.uploads.lock().expect("upload counter");
        *n += 1;
        format!("upload-{n}")
    }

    fn store_overlay(&self, id: &str, rendered: &Rendered) -> Result<(), ApiError> {
        let png = rendered.overlay.encode_png()?;
        self.overlays.lock().expect("overlay cache").insert(id.to_string(), png);
        Ok(())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<cmad::Error> for ApiError {
    fn from(e: cmad::Error) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

/// An uploaded PNG, base64 encoded. The id names feature files for
/// file-extractor models and keys the overlay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageUpload {
    #[serde(default)]
    pub id: Option<String>,
    pub png: String,
}

impl ImageUpload {
    pub fn from_image(id: Option<String>, image: &Image) -> cmad::Result<Self> {
        Ok(Self { id, png: STANDARD.encode(image.encode_png()?) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub component: usize,
    pub c_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub k: usize,
    pub k_prime: usize,
    pub components: Vec<usize>,
    pub noise: Vec<usize>,
    pub background: Vec<usize>,
    pub calibration: Vec<Calibration>,
    pub reference_image: String,
    pub alpha: f64,
    pub default_threshold: f64,
    pub mean_training_score: f64,
    pub training_images: usize,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMask {
    pub component: usize,
    pub area: usize,
    /// Row-major run lengths, starting with a run of background.
    pub rle: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub components: Vec<ComponentMask>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRequest {
    pub dataset: PathBuf,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/model/summary", get(summary))
        .route("/api/score", post(score))
        .route("/api/segment", post(segment))
        .route("/api/policy", get(get_policy).put(put_policy))
        .route("/api/eval", post(eval))
        .route("/api/images/{id}/overlay", get(overlay))
        .with_state(state)
}

fn decode_upload(state: &AppState, upload: ImageUpload) -> Result<Sample, ApiError> {
    let bytes = STANDARD
        .decode(upload.png.as_bytes())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("image is not valid base64: {e}")))?;
    let image = Image::decode_png(&bytes)?;
    let id = match upload.id {
        Some(id) if !id.is_empty() => id,
        _ => state.upload_id(),
    };
    Ok(Sample::new(id, image))
}

async fn summary(State(state): State<Arc<AppState>>) -> Json<ModelSummary> {
    let m = state.detector.model();
    Json(ModelSummary {
        k: m.prototypes.k,
        k_prime: m.kept().len(),
        components: m.kept().to_vec(),
        noise: m.reserved.noise.clone(),
        background: m.reserved.background.clone(),
        calibration: m.kept().iter().zip(&m.scales).map(|(&k, s)| Calibration { component: k, c_star: s.c_star }).collect(),
        reference_image: m.reference_image.clone(),
        alpha: m.config.detector.alpha,
        default_threshold: m.default_threshold(),
        mean_training_score: m.mean_training_score(),
        training_images: m.training.ids.len(),
        config: m.config.clone(),
    })
}

async fn score(State(state): State<Arc<AppState>>, Json(upload): Json<ImageUpload>) -> Result<Json<AnomalyReport>, ApiError> {
    let sample = decode_upload(&state, upload)?;
    let policy = state.policy();
    let st = state.clone();
    let report = tokio::task::spawn_blocking(move || -> Result<AnomalyReport, ApiError> {
        let (report, rendered) = score_and_render(&st.detector, &sample, &policy)?;
        st.store_overlay(&sample.id, &rendered)?;
        Ok(report)
    })
    .await??;
    Ok(Json(report))
}

async fn segment(State(state): State<Arc<AppState>>, Json(upload): Json<ImageUpload>) -> Result<Json<SegmentResponse>, ApiError> {
    let sample = decode_upload(&state, upload)?;
    let st = state.clone();
    let body = tokio::task::spawn_blocking(move || -> Result<SegmentResponse, ApiError> {
        let rendered = render(&st.detector, &sample)?;
        st.store_overlay(&sample.id, &rendered)?;
        Ok(SegmentResponse {
            id: sample.id.clone(),
            height: sample.image.height(),
            width: sample.image.width(),
            components: rendered
                .masks
                .iter()
                .map(|(k, m)| ComponentMask { component: *k, area: m.area(), rle: m.rle() })
                .collect(),
        })
    })
    .await??;
    Ok(Json(body))
}

async fn get_policy(State(state): State<Arc<AppState>>) -> Json<PolicyConfig> {
    Json(state.policy())
}

async fn put_policy(State(state): State<Arc<AppState>>, Json(policy): Json<PolicyConfig>) -> Result<Json<PolicyConfig>, ApiError> {
    policy.validate()?;
    *state.policy.write().expect("policy lock") = policy.clone();
    Ok(Json(policy))
}

async fn eval(State(state): State<Arc<AppState>>, Json(req): Json<EvalRequest>) -> Result<Json<BenchmarkReport>, ApiError> {
    let policy = state.policy();
    let st = state.clone();
    let report = tokio::task::spawn_blocking(move || -> Result<BenchmarkReport, ApiError> {
        let ds = load_dataset(&req.dataset)?;
        if ds.test.is_empty() {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "dataset has no test images"));
        }
        Ok(run_benchmark(&st.detector, &policy, &ds.test)?)
    })
    .await??;
    Ok(Json(report))
}

async fn overlay(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let png = state.overlays.lock().expect("overlay cache").png.get(&id).cloned();
    match png {
        Some(png) => Ok(([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no overlay for image `{id}`; score or segment it first"))),
    }
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
