//! Serves any [`Encoder`]/[`Generator`] pair over the `POST /encode` and
//! `POST /generate` protocol, so remote models and the stub look the same to
//! the selection service.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use dq_core::models::{
    ClientError, EncodeRequest, EncodeResponse, Encoder, GenerateRequest, GenerateResponse, Generator, Registry,
    StubEncoder, StubGenerator,
};

use crate::api::ErrorBody;

#[derive(Clone)]
pub struct EncoderState {
    pub encoder: Arc<dyn Encoder>,
    pub generator: Arc<dyn Generator>,
    pub registry: Arc<Registry>,
}

impl EncoderState {
    pub fn stub(registry: Registry) -> Self {
        Self {
            encoder: Arc::new(StubEncoder),
            generator: Arc::new(StubGenerator),
            registry: Arc::new(registry),
        }
    }
}

type Reply<T> = Result<Json<T>, (StatusCode, Json<ErrorBody>)>;

fn reject(status: StatusCode, error: impl ToString) -> (StatusCode, Json<ErrorBody>) {
    (
        status,
        Json(ErrorBody {
            error: error.to_string(),
        }),
    )
}

async fn encode(State(state): State<EncoderState>, Json(req): Json<EncodeRequest>) -> Reply<EncodeResponse> {
    let record = state
        .registry
        .get(&req.model_id)
        .map_err(|e| reject(StatusCode::NOT_FOUND, e))?
        .clone();
    let vectors = tokio::task::spawn_blocking(move || state.encoder.encode(&record, req.mode, &req.texts))
        .await
        .map_err(|e| reject(StatusCode::INTERNAL_SERVER_ERROR, e))?
        .map_err(|e| reject(StatusCode::BAD_GATEWAY, e))?;
    Ok(Json(EncodeResponse { vectors }))
}

async fn generate(State(state): State<EncoderState>, Json(req): Json<GenerateRequest>) -> Reply<GenerateResponse> {
    let queries = tokio::task::spawn_blocking(move || state.generator.generate(&req.doc, req.n))
        .await
        .map_err(|e| reject(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    match queries {
        Ok(queries) => Ok(Json(GenerateResponse { queries })),
        Err(ClientError::EmptyGeneration) => Ok(Json(GenerateResponse { queries: Vec::new() })),
        Err(e) => Err(reject(StatusCode::BAD_GATEWAY, e)),
    }
}

pub fn router(state: EncoderState) -> Router {
    Router::new()
        .route("/encode", post(encode))
        .route("/generate", post(generate))
        .with_state(state)
}
