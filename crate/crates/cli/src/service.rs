//! JSON decision service over a read-only checkpoint.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use curveroute::data::Query;
use curveroute::predictors::{PredictorError, QualityPredictor, RouterModel, CHECKPOINT_FORMAT};
use curveroute::router::{route, ReactiveAnchors, RouteError, RoutingMode, RoutingPolicy};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub embedding: Vec<f64>,
    pub lambda: f64,
    pub budget_limit: u32,
    pub mode: RoutingMode,
    #[serde(default = "default_query_id")]
    pub query_id: String,
    #[serde(default)]
    pub input_tokens: u64,
}

/// Query id used when a request or inline route names none.
pub const INLINE_QUERY_ID: &str = "inline";

fn default_query_id() -> String {
    INLINE_QUERY_ID.to_string()
}

impl RouteRequest {
    pub fn policy(&self) -> RoutingPolicy {
        RoutingPolicy {
            input_tokens: self.input_tokens,
            ..RoutingPolicy::new(self.lambda, self.budget_limit, self.mode)
        }
    }

    pub fn query(&self) -> Query {
        Query::new(self.query_id.clone(), self.embedding.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_format: String,
    pub pool_size: usize,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn route_error(e: RouteError) -> Response {
    let status = match &e {
        RouteError::NoFeasibleBudget { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        RouteError::Policy(_) | RouteError::Predictor(PredictorError::Dimension { .. }) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.to_string())
}

async fn health(State(model): State<Arc<RouterModel>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_format: CHECKPOINT_FORMAT.into(),
        pool_size: model.pool().len(),
    })
}

async fn route_handler(State(model): State<Arc<RouterModel>>, body: Bytes) -> Response {
    let req: RouteRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    match route(model.as_ref(), &req.query(), &req.policy(), &ReactiveAnchors::default()) {
        Ok(d) => Json(d).into_response(),
        Err(e) => route_error(e),
    }
}

pub fn app(model: Arc<RouterModel>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/route", post(route_handler))
        .with_state(model)
}

/// Serves until `shutdown` resolves; in-flight requests finish first.
pub async fn serve(
    listener: TcpListener,
    model: Arc<RouterModel>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app(model)).with_graceful_shutdown(shutdown).await
}

/// Resolves on interrupt or, on unix, termination.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let mut term = match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return ctrl_c.await,
        };
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}
