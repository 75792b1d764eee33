//! JSON-over-HTTP service for the session workflow.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use sde_core::detailing::ExpansionConfig;
use sde_core::pipeline::{session_to_json, AdvanceParams, NewSession, Pipeline, SceneEdit, SessionState};
use sde_core::Error;

type Shared = Arc<Pipeline>;

/// Error response: a status plus a JSON body `{error, message, violations?}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    violations: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            violations: None,
        }
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) | Error::PathNotFound(_) => StatusCode::NOT_FOUND,
        Error::StageOrderViolation { .. } => StatusCode::CONFLICT,
        Error::Backend(_) | Error::MalformedOutput(_) => StatusCode::BAD_GATEWAY,
        Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::InvalidScene(_) => "invalid-scene",
        Error::OrphanPath(_) => "orphan-path",
        Error::IncompleteRecord { .. } => "incomplete-record",
        Error::EmptyInput => "empty-input",
        Error::BadK { .. } => "bad-k",
        Error::Backend(_) => "backend",
        Error::MalformedOutput(_) => "malformed-output",
        Error::EmptyLibrary => "empty-library",
        Error::InvalidTemplate { .. } => "invalid-template",
        Error::Parse { .. } => "parse",
        Error::PathNotFound(_) => "path-not-found",
        Error::PathExists(_) => "path-exists",
        Error::InvalidEdit(_) => "invalid-edit",
        Error::StageOrderViolation { .. } => "stage-order",
        Error::NotFound(_) => "not-found",
        Error::EmptyPrompt => "empty-prompt",
        Error::EmptyCorpus => "empty-corpus",
        Error::Io { .. } => "io",
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = status_for(&e);
        if status.is_server_error() {
            tracing::error!("request failed: {e}");
        }
        let violations = match e.violations() {
            [] => None,
            v => serde_json::to_value(v).ok(),
        };
        ApiError {
            status,
            kind: kind_of(&e),
            message: e.to_string(),
            violations,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind, "message": self.message });
        if let Some(v) = self.violations {
            body["violations"] = v;
        }
        (self.status, axum::Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_data() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, "invalid-body", e.to_string())
    })
}

/// Runs blocking pipeline work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> sde_core::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
        )),
    }
}

fn session_response(status: StatusCode, state: &SessionState) -> ApiResult<Response> {
    let body = session_to_json(state)?;
    Ok((status, [(header::CONTENT_TYPE, "application/json")], body).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AdvanceBody {
    params: Option<AdvanceParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IterateBody {
    edits: Vec<SceneEdit>,
    expand: Option<ExpansionConfig>,
}

async fn create_session(State(p): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let request: NewSession = parse_body(&body)?;
    let state = blocking(move || p.create(request)).await?;
    session_response(StatusCode::CREATED, &state)
}

async fn get_session(State(p): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let state = blocking(move || p.load(&id)).await?;
    session_response(StatusCode::OK, &state)
}

async fn advance(State(p): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: AdvanceBody = parse_body(&body)?;
    let params = body.params.unwrap_or_default();
    let state = blocking(move || p.advance(&id, &params)).await?;
    session_response(StatusCode::OK, &state)
}

async fn iterate(State(p): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: IterateBody = parse_body(&body)?;
    let state = blocking(move || p.iterate(&id, &body.edits, body.expand.as_ref())).await?;
    session_response(StatusCode::OK, &state)
}

async fn iteration_svg(State(p): State<Shared>, Path((id, n)): Path<(String, usize)>) -> ApiResult<Response> {
    let svg = blocking(move || p.iteration_svg(&id, n)).await?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn iteration_prompt(State(p): State<Shared>, Path((id, n)): Path<(String, usize)>) -> ApiResult<Response> {
    let prompt = blocking(move || p.iteration_prompt(&id, n)).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], prompt).into_response())
}

async fn templates(State(p): State<Shared>) -> Response {
    axum::Json(p.templates().to_vec()).into_response()
}

/// The service routes. `allow_origin` enables CORS for one origin, or for
/// any origin when it is `*`.
pub fn router(pipeline: Arc<Pipeline>, allow_origin: Option<&str>) -> Result<Router, String> {
    let mut app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/iterate", post(iterate))
        .route("/sessions/{id}/iterations/{n}/svg", get(iteration_svg))
        .route("/sessions/{id}/iterations/{n}/prompt", get(iteration_prompt))
        .route("/templates", get(templates))
        .with_state(pipeline);
    if let Some(origin) = allow_origin {
        let allow = if origin == "*" {
            AllowOrigin::any()
        } else {
            let value = HeaderValue::from_str(origin).map_err(|e| format!("bad origin {origin:?}: {e}"))?;
            AllowOrigin::exact(value)
        };
        let cors = CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]);
        app = app.layer(cors);
    }
    Ok(app)
}
