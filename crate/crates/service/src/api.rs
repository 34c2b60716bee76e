use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;

use crate::store::{Store, StoreError};

impl StoreError {
    pub fn status_code(&self) -> StatusCode {
        match self {
            StoreError::UnknownVideo(_) | StoreError::UnknownRound(_) | StoreError::FrameOutOfRange { .. } => {
                StatusCode::NOT_FOUND
            }
            StoreError::NoPrediction(_) | StoreError::RoundRunning(_) | StoreError::Finished => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::BAD_REQUEST,
            StoreError::Uncorrected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::WouldBlock => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for StoreError {
    fn into_response(self) -> Response {
        let status = self.status_code();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let mut body = json!({ "error": self.to_string() });
        match &self {
            StoreError::Corrupt { video_id, .. } | StoreError::UnknownVideo(video_id) => {
                body["video_id"] = json!(video_id);
            }
            StoreError::Uncorrected(videos) => body["uncorrected"] = json!(videos),
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, StoreError>;

/// Runs a store call off the async workers.
async fn blocking<T, F>(store: &Arc<Store>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Arc<Store>) -> ApiResult<T> + Send + 'static,
{
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .expect("store task panicked")
}

fn json_bytes<T: Serialize>(value: &T) -> Response {
    let mut body = serde_json::to_vec_pretty(value).expect("payload serializes");
    body.push(b'\n');
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn list_videos(State(store): State<Arc<Store>>) -> ApiResult<Response> {
    blocking(&store, |s| s.list_videos()).await.map(|v| json_bytes(&v))
}

async fn timeline(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&store, move |s| s.timeline(&id)).await.map(|t| json_bytes(&t))
}

async fn put_corrections(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    blocking(&store, move |s| s.put_corrections(&id, &body))
        .await
        .map(|r| json_bytes(&r))
}

async fn start_round(State(store): State<Arc<Store>>) -> ApiResult<Response> {
    let id = blocking(&store, |s| s.start_round()).await?;
    let mut resp = json_bytes(&json!({ "round_id": id }));
    *resp.status_mut() = StatusCode::ACCEPTED;
    Ok(resp)
}

async fn round(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&store, move |s| s.round(&id)).await.map(|r| json_bytes(&r))
}

async fn frame(State(store): State<Arc<Store>>, Path((video, index)): Path<(String, String)>) -> ApiResult<Response> {
    let Ok(index) = index.parse::<usize>() else {
        return Err(StoreError::FrameOutOfRange { video, index: usize::MAX });
    };
    let png = blocking(&store, move |s| s.frame_png(&video, index)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Routes for every endpoint. GET routes also answer HEAD with the same
/// status and headers and no body.
pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/api/videos", get(list_videos))
        .route("/api/videos/{id}/timeline", get(timeline))
        .route("/api/videos/{id}/corrections", put(put_corrections))
        .route("/api/rounds", post(start_round))
        .route("/api/rounds/{id}", get(round))
        .route("/api/frames/{video}/{index}", get(frame))
        .with_state(store)
}

/// Serves the store at `addr` until Ctrl-C.
pub async fn serve(store: Arc<Store>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
