//! HTTP tool service: the toolbox exposed as JSON endpoints for external
//! agent trainers. Handlers are stateless over an immutable store.

use std::future::Future;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use graphwalk_core::kg::{Resolution, StoreStats};
use graphwalk_core::toolbox::{RelationQueryResult, ToolError, Toolbox, TripleQueryResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GetRelationsRequest {
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GetTriplesRequest {
    pub entity: String,
    pub relations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveRequest {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub stats: StoreStats,
}

/// Error returned by a handler, mapped onto a status code and envelope.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<ToolError> for ApiError {
    fn from(e: ToolError) -> Self {
        let (status, code) = match &e {
            ToolError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ToolError::Argument(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ToolError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend_error"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorEnvelope {
            code: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Shared handler state.
#[derive(Clone)]
pub struct ServiceState {
    pub toolbox: Arc<Toolbox>,
    pub default_k: usize,
    pub default_cap: usize,
}

impl ServiceState {
    pub fn new(toolbox: Arc<Toolbox>) -> Self {
        let cfg = toolbox.config();
        Self {
            default_k: cfg.top_k,
            default_cap: cfg.per_relation_cap,
            toolbox,
        }
    }
}

/// Library form of `POST /v1/tools/get_relations`.
pub fn get_relations(toolbox: &Toolbox, default_k: usize, req: &GetRelationsRequest) -> Result<RelationQueryResult, ToolError> {
    let k = req.k.unwrap_or(default_k);
    if k == 0 {
        return Err(ToolError::Argument("k must be positive".into()));
    }
    let entity = toolbox.resolve_argument(&req.entity)?;
    toolbox.get_relations(&entity, req.question.as_deref(), k)
}

/// Library form of `POST /v1/tools/get_triples`.
pub fn get_triples(toolbox: &Toolbox, default_cap: usize, req: &GetTriplesRequest) -> Result<TripleQueryResult, ToolError> {
    if req.relations.is_empty() {
        return Err(ToolError::Argument("relations must be non-empty".into()));
    }
    let cap = req.cap.unwrap_or(default_cap);
    if cap == 0 {
        return Err(ToolError::Argument("cap must be positive".into()));
    }
    let entity = toolbox.resolve_argument(&req.entity)?;
    toolbox.get_triples(&entity, &req.relations, cap)
}

/// Library form of `POST /v1/resolve`.
pub fn resolve(toolbox: &Toolbox, req: &ResolveRequest) -> Result<Resolution, ToolError> {
    if req.name.trim().is_empty() {
        return Err(ToolError::Argument("name must be non-empty".into()));
    }
    toolbox.resolve(&req.name)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ToolError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map(Json).map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        }),
    }
}

async fn relations_handler(State(s): State<ServiceState>, body: Bytes) -> Result<Json<RelationQueryResult>, ApiError> {
    let req: GetRelationsRequest = parse_body(&body)?;
    blocking(move || get_relations(&s.toolbox, s.default_k, &req)).await
}

async fn triples_handler(State(s): State<ServiceState>, body: Bytes) -> Result<Json<TripleQueryResult>, ApiError> {
    let req: GetTriplesRequest = parse_body(&body)?;
    blocking(move || get_triples(&s.toolbox, s.default_cap, &req)).await
}

async fn resolve_handler(State(s): State<ServiceState>, body: Bytes) -> Result<Json<Resolution>, ApiError> {
    let req: ResolveRequest = parse_body(&body)?;
    blocking(move || resolve(&s.toolbox, &req)).await
}

async fn health_handler(State(s): State<ServiceState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        stats: s.toolbox.store().stats(),
    })
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such route".into(),
    }
}

async fn access_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let start = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        target: "access",
        %method,
        path,
        status = response.status().as_u16(),
        micros = start.elapsed().as_micros() as u64,
    );
    response
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/v1/tools/get_relations", post(relations_handler))
        .route("/v1/tools/get_triples", post(triples_handler))
        .route("/v1/resolve", post(resolve_handler))
        .route("/healthz", get(health_handler))
        .fallback(not_found)
        .layer(middleware::from_fn(access_log))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: ServiceState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphwalk_core::kg::TripleRecord;
    use graphwalk_core::toolbox::ToolboxConfig;
    use graphwalk_core::GraphStore;

    fn toolbox() -> Toolbox {
        let recs = vec![TripleRecord::new("a", "r.x", "b").names(Some("Alpha"), Some("Beta"))];
        Toolbox::new(Arc::new(GraphStore::from_records(recs).unwrap()), ToolboxConfig::default())
    }

    #[test]
    fn library_forms_validate_arguments() {
        let tb = toolbox();
        let empty = GetTriplesRequest {
            entity: "Alpha".into(),
            relations: vec![],
            cap: None,
        };
        assert!(matches!(get_triples(&tb, 5, &empty), Err(ToolError::Argument(_))));
        let zero = GetRelationsRequest {
            entity: "Alpha".into(),
            question: None,
            k: Some(0),
        };
        assert!(matches!(get_relations(&tb, 20, &zero), Err(ToolError::Argument(_))));
        let unknown = ResolveRequest { name: "Nobody".into() };
        assert!(matches!(resolve(&tb, &unknown), Err(ToolError::NotFound(_))));
    }

    #[test]
    fn error_statuses() {
        let e: ApiError = ToolError::Backend("down".into()).into();
        assert_eq!(e.status, StatusCode::BAD_GATEWAY);
        let e: ApiError = ToolError::NotFound("x".into()).into();
        assert_eq!(e.status, StatusCode::NOT_FOUND);
    }

    #[test]
    fn unknown_fields_rejected() {
        let body = Bytes::from_static(br#"{"entity":"a","relations":["r"],"extra":1}"#);
        assert!(parse_body::<GetTriplesRequest>(&body).is_err());
    }
}
