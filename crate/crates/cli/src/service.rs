//! HTTP front end. Every handler decodes a request, runs the same engine call
//! as the command line on a blocking thread and returns the serialized envelope.

use std::future::Future;

use axum::body::Bytes;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use metabal_core::api::{self, AnalysisRequest, MrRequest};
use metabal_core::io::{serialize_result, Envelope, SCHEMA_VERSION};
use metabal_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tokio::net::TcpListener;

pub fn router() -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/analyze", post(analyze))
        .route("/v1/egger", post(egger))
        .route("/v1/leave-one-out", post(leave_one_out))
        .route("/v1/mr", post(mr))
        .fallback(not_found)
}

/// Serve until `shutdown` resolves; in-flight requests are allowed to finish.
pub async fn serve(
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router())
        .with_graceful_shutdown(shutdown)
        .await
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn value_response(status: StatusCode, v: Value) -> Response {
    let mut body = serde_json::to_vec(&v).expect("json value serializes");
    body.push(b'\n');
    json_response(status, body)
}

async fn health() -> Response {
    value_response(
        StatusCode::OK,
        json!({"status": "ok", "schema_version": SCHEMA_VERSION}),
    )
}

async fn not_found() -> Response {
    value_response(
        StatusCode::NOT_FOUND,
        json!({"schema_version": SCHEMA_VERSION, "error": {"kind": "not_found", "message": "no such endpoint"}}),
    )
}

/// Machine-readable body for a request the engine rejected.
pub fn error_detail(e: &Error) -> Value {
    let mut detail = json!({"kind": e.kind(), "message": e.to_string()});
    match e {
        Error::UnknownId(id) | Error::DuplicateId(id) | Error::ZeroExposure(id) => {
            detail["id"] = json!(id);
        }
        Error::Row { row, field, .. } => {
            detail["row"] = json!(row);
            detail["field"] = json!(field);
        }
        _ => {}
    }
    json!({"schema_version": SCHEMA_VERSION, "error": detail})
}

fn internal(message: &str) -> Response {
    let id = uuid::Uuid::new_v4().to_string();
    log::error!("internal error {id}: {message}");
    value_response(
        StatusCode::INTERNAL_SERVER_ERROR,
        json!({"schema_version": SCHEMA_VERSION, "error": {"kind": "internal", "id": id}}),
    )
}

async fn run<R>(body: Bytes, f: fn(&R) -> Result<Envelope>) -> Response
where
    R: DeserializeOwned + Send + 'static,
{
    let req: R = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            let err = Error::Validation(format!("malformed request body: {e}"));
            return value_response(StatusCode::BAD_REQUEST, error_detail(&err));
        }
    };
    let outcome =
        tokio::task::spawn_blocking(move || f(&req).and_then(|env| serialize_result(&env))).await;
    match outcome {
        Ok(Ok(bytes)) => json_response(StatusCode::OK, bytes),
        Ok(Err(e)) if e.is_user_error() => {
            value_response(StatusCode::BAD_REQUEST, error_detail(&e))
        }
        Ok(Err(e)) => internal(&e.to_string()),
        Err(join) => internal(&join.to_string()),
    }
}

async fn analyze(body: Bytes) -> Response {
    run::<AnalysisRequest>(body, api::analyze).await
}

async fn egger(body: Bytes) -> Response {
    run::<AnalysisRequest>(body, api::egger).await
}

async fn leave_one_out(body: Bytes) -> Response {
    run::<AnalysisRequest>(body, api::sensitivity).await
}

async fn mr(body: Bytes) -> Response {
    run::<MrRequest>(body, api::mendelian).await
}
