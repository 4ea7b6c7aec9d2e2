//! The `/api` HTTP surface consumed by the dashboard and scripts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, Method as HttpMethod, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Utc;
use dq_core::corpus::{Collection, CORPUS_FILE, QRELS_FILE, QUERIES_FILE};
use dq_core::models::{build_bundle, ModelRecord};
use dq_core::{Direction, Method, SelectionParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::pipeline::ServiceContext;
use crate::store::{CollectionRecord, Job, JobStore, StoreError, StoredResult};

pub const UPLOAD_FILES: [&str; 3] = [CORPUS_FILE, QUERIES_FILE, QRELS_FILE];

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<JobStore>,
    pub ctx: Arc<ServiceContext>,
    pub auth_token: Option<String>,
    pub upload_cap_bytes: u64,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

/// Body of every error response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::JobNotFound(_) | StoreError::ResultNotFound(_) | StoreError::UnknownCollection(_) => {
                ApiError::not_found(e.to_string())
            }
            _ => ApiError::internal(e),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionCreated {
    pub collection_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitJob {
    pub collection_id: String,
    pub method: String,
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
}

/// One entry of `GET /api/methods`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub name: String,
    pub display_name: String,
    pub description: String,
    pub direction: Direction,
    pub requires_queries: bool,
    pub user_parameters: Vec<String>,
}

impl From<Method> for MethodInfo {
    fn from(m: Method) -> Self {
        Self {
            name: m.name().into(),
            display_name: m.display_name().into(),
            description: m.description().into(),
            direction: m.direction(),
            requires_queries: m.requires_queries(),
            user_parameters: m.user_parameters().iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn method_catalog() -> Vec<MethodInfo> {
    Method::ALL.into_iter().map(MethodInfo::from).collect()
}

/// Overlays user-supplied keys on the defaults; unknown keys are rejected.
pub fn resolve_params(
    defaults: &SelectionParams,
    overrides: &serde_json::Map<String, Value>,
) -> Result<SelectionParams, String> {
    let mut merged = serde_json::to_value(defaults).map_err(|e| e.to_string())?;
    let obj = merged.as_object_mut().expect("params serialize to an object");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    let params: SelectionParams = serde_json::from_value(merged).map_err(|e| e.to_string())?;
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    let needs_auth = request.method() != HttpMethod::GET && request.method() != HttpMethod::OPTIONS;
    if let (true, Some(token)) = (needs_auth, &state.auth_token) {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(request).await
}

async fn list_collections(State(state): State<AppState>) -> Json<Vec<CollectionRecord>> {
    Json(state.store.collections())
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    ApiError::new(e.status(), e.body_text())
}

async fn upload_collection(State(state): State<AppState>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let root = state.ctx.collections_root();
    let staging = root.join(format!(
        ".staging-{}-{}",
        std::process::id(),
        Utc::now().timestamp_nanos_opt().unwrap_or(0)
    ));
    std::fs::create_dir_all(&staging).map_err(ApiError::internal)?;
    let outcome = receive_files(&state, &mut multipart, &staging).await;
    let name = match outcome {
        Ok(name) => name,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    let store = state.store.clone();
    let record = blocking(move || install_staged(&store, &root, &staging, name)).await??;
    Ok((
        StatusCode::CREATED,
        Json(CollectionCreated {
            collection_id: record.id,
        }),
    )
        .into_response())
}

/// Streams each file part to `staging`; returns the optional `name` field.
async fn receive_files(
    state: &AppState,
    multipart: &mut Multipart,
    staging: &Path,
) -> Result<Option<String>, ApiError> {
    let mut name = None;
    let mut received: u64 = 0;
    while let Some(mut field) = multipart.next_field().await.map_err(multipart_error)? {
        let label = field
            .file_name()
            .or(field.name())
            .map(|s| s.rsplit(['/', '\\']).next().unwrap_or(s).to_string())
            .unwrap_or_default();
        if field.name() == Some("name") && field.file_name().is_none() {
            name = Some(field.text().await.map_err(multipart_error)?);
            continue;
        }
        if !UPLOAD_FILES.contains(&label.as_str()) {
            return Err(ApiError::bad_request(format!(
                "unexpected file {label:?}; expected one of {}",
                UPLOAD_FILES.join(", ")
            )));
        }
        let path = staging.join(&label);
        if path.exists() {
            return Err(ApiError::bad_request(format!("{label} uploaded twice")));
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path).map_err(ApiError::internal)?);
        while let Some(chunk) = field.chunk().await.map_err(multipart_error)? {
            received += chunk.len() as u64;
            if received > state.upload_cap_bytes {
                return Err(ApiError::new(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    format!("upload exceeds the {} byte cap", state.upload_cap_bytes),
                ));
            }
            file.write_all(&chunk).map_err(ApiError::internal)?;
        }
        file.flush().map_err(ApiError::internal)?;
    }
    if !staging.join(CORPUS_FILE).exists() {
        return Err(ApiError::bad_request(format!("{CORPUS_FILE} is required")));
    }
    Ok(name)
}

fn install_staged(
    store: &JobStore,
    root: &Path,
    staging: &PathBuf,
    name: Option<String>,
) -> Result<CollectionRecord, ApiError> {
    let collection = match Collection::load_dir(staging) {
        Ok(c) => c,
        Err(e) => {
            let _ = std::fs::remove_dir_all(staging);
            return Err(ApiError::bad_request(e.to_string()));
        }
    };
    let id = store.next_collection_id();
    std::fs::rename(staging, root.join(&id)).map_err(ApiError::internal)?;
    let record = CollectionRecord {
        name: name.filter(|n| !n.trim().is_empty()).unwrap_or_else(|| id.clone()),
        id,
        created_at: Utc::now(),
        documents: collection.corpus.len(),
        queries: collection.queries.as_ref().map_or(0, Vec::len),
        has_qrels: collection.qrels.is_some(),
    };
    store.add_collection(record.clone())?;
    Ok(record)
}

async fn submit_job(State(state): State<AppState>, Json(body): Json<SubmitJob>) -> Result<Response, ApiError> {
    let collection = state
        .store
        .collection(&body.collection_id)
        .ok_or_else(|| ApiError::not_found(format!("collection {:?} not found", body.collection_id)))?;
    let method: Method = body
        .method
        .parse()
        .map_err(|e: dq_core::method::UnknownMethod| ApiError::bad_request(e.to_string()))?;
    let params = resolve_params(&state.ctx.defaults, &body.params)
        .map_err(|e| ApiError::bad_request(format!("invalid parameters: {e}")))?;
    if method.requires_queries() && collection.queries == 0 {
        return Err(ApiError::bad_request(format!("method {method} needs a query set")));
    }
    let ctx = state.ctx.clone();
    let store = state.store.clone();
    let job = blocking(move || {
        let class = ctx.queue_class(method, &collection.id, collection.documents);
        store.submit(&collection.id, method, params, class)
    })
    .await??;
    Ok((StatusCode::CREATED, Json(job)).into_response())
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<Job>> {
    Json(state.store.jobs())
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Job> {
    Ok(Json(state.store.job(&id)?))
}

async fn get_result(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StoredResult> {
    Ok(Json(state.store.result(&id)?))
}

async fn list_models(State(state): State<AppState>) -> Json<Vec<ModelRecord>> {
    Json(state.ctx.registry.iter().cloned().collect())
}

async fn model_bundle(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = state
        .ctx
        .registry
        .get(&id)
        .map_err(|e| ApiError::not_found(e.to_string()))?
        .clone();
    let bytes = build_bundle(&record).map_err(ApiError::internal)?;
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, "application/zip".parse().unwrap());
    let disposition = format!("attachment; filename=\"{}.zip\"", id.replace(['"', '\\'], "_"));
    headers.insert(
        header::CONTENT_DISPOSITION,
        disposition.parse().map_err(ApiError::internal)?,
    );
    Ok((headers, Body::from(bytes)).into_response())
}

async fn list_methods() -> Json<Vec<MethodInfo>> {
    Json(method_catalog())
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// The `/api` routes, plus the dashboard's static files when `static_dir` is set.
pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let body_limit = usize::try_from(state.upload_cap_bytes).unwrap_or(usize::MAX);
    let api = Router::new()
        .route("/collections", get(list_collections).post(upload_collection))
        .route("/jobs", get(list_jobs).post(submit_job))
        .route("/jobs/:id", get(get_job))
        .route("/jobs/:id/result", get(get_result))
        .route("/models", get(list_models))
        .route("/models/:id/bundle", get(model_bundle))
        .route("/methods", get(list_methods))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(CorsLayer::permissive())
}
