//! HTTP suggest service.
//!
//! `GET /suggest?prefix=..&user=..&t=<ISO-8601>&k=..&strategy=..` answers
//! with `{"prefix", "strategy", "latency_ms", "suggestions": [{"text",
//! "score"}]}`; `GET /health` answers `ok`.

use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::decoder::DecoderConfig;
use crate::engine::{build_engine, ArtifactPaths, Engine, EngineError, Strategy, SuggestRequest};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Service settings, read from TOML. Relative artifact paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub artifacts: ArtifactPaths,
    pub default_strategy: Strategy,
    pub default_k: usize,
    /// Upper bound on `k` accepted from clients.
    pub max_k: usize,
    /// Allowed CORS origins; `"*"` allows any.
    pub cors_allow: Vec<String>,
    /// Directory of static files served for unmatched paths.
    pub static_dir: Option<PathBuf>,
    pub decoder: DecoderConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            artifacts: ArtifactPaths::default(),
            default_strategy: Strategy::Routed,
            default_k: 10,
            max_k: 50,
            cors_allow: Vec::new(),
            static_dir: None,
            decoder: DecoderConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        if config.default_k == 0 || config.default_k > config.max_k {
            return Err(ServiceError::Config(format!("default_k must lie in 1..={}", config.max_k)));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let a = &mut config.artifacts;
        for p in [&mut a.trie, &mut a.model, &mut a.words, &mut a.users, &mut config.static_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

pub struct AppState {
    pub engine: Engine,
    pub default_strategy: Strategy,
    pub default_k: usize,
    pub max_k: usize,
}

#[derive(Debug, Deserialize)]
struct SuggestParams {
    prefix: Option<String>,
    user: Option<String>,
    t: Option<String>,
    k: Option<String>,
    strategy: Option<String>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

/// RFC 3339 keeps the client's local wall time; naive forms are taken as is.
pub fn parse_iso_time(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"].iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

async fn suggest(State(state): State<Arc<AppState>>, Query(params): Query<SuggestParams>) -> Response {
    let Some(prefix) = params.prefix.filter(|p| !p.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing prefix parameter");
    };
    let k = match params.k.as_deref().filter(|s| !s.is_empty()) {
        None => state.default_k,
        Some(s) => match s.parse::<usize>() {
            Ok(k) if (1..=state.max_k).contains(&k) => k,
            _ => return error(StatusCode::BAD_REQUEST, format!("k must be an integer in 1..={}", state.max_k)),
        },
    };
    let strategy = match params.strategy.as_deref().filter(|s| !s.is_empty()) {
        None => state.default_strategy,
        Some(s) => match s.parse() {
            Ok(v) => v,
            Err(e) => return error(StatusCode::BAD_REQUEST, e),
        },
    };
    let timestamp = match params.t.as_deref().filter(|s| !s.is_empty()) {
        None => chrono::Local::now().naive_local(),
        Some(s) => match parse_iso_time(s) {
            Some(t) => t,
            None => return error(StatusCode::BAD_REQUEST, "t must be an ISO-8601 date-time"),
        },
    };
    let request = SuggestRequest { prefix, user_id: params.user.filter(|u| !u.is_empty()), timestamp: Some(timestamp), k, strategy };
    let worker = Arc::clone(&state);
    match tokio::task::spawn_blocking(move || worker.engine.suggest(&request)).await {
        Ok(Ok(response)) => Json(response).into_response(),
        Ok(Err(e @ (EngineError::Request(_) | EngineError::Config(_)))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => {
            tracing::error!(error = %e, "suggest failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
        Err(e) => {
            tracing::error!(error = %e, "suggest task failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
    }
}

fn cors_layer(origins: &[String]) -> Result<Option<CorsLayer>, ServiceError> {
    if origins.is_empty() {
        return Ok(None);
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        let values = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Config(format!("bad CORS origin {o:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(values)
    };
    Ok(Some(CorsLayer::new().allow_origin(allow).allow_methods([Method::GET])))
}

/// The service's router around an already built engine.
pub fn app(engine: Engine, config: &ServiceConfig) -> Result<Router, ServiceError> {
    let usable = engine.supports(config.default_strategy) || (config.default_strategy == Strategy::Routed && engine.trie().is_some());
    if !usable {
        return Err(ServiceError::Config(format!("default strategy {} is not available with the loaded artifacts", config.default_strategy)));
    }
    let state = Arc::new(AppState { engine, default_strategy: config.default_strategy, default_k: config.default_k, max_k: config.max_k });
    let mut router = Router::new().route("/suggest", get(suggest)).route("/health", get(|| async { "ok" })).with_state(state);
    if let Some(dir) = &config.static_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    if let Some(cors) = cors_layer(&config.cors_allow)? {
        router = router.layer(cors);
    }
    Ok(router.layer(TraceLayer::new_for_http()))
}

/// Serve `router` on `listener` until `shutdown` resolves, then drain
/// in-flight requests.
pub async fn serve_on(listener: TcpListener, router: Router, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Load artifacts (failing fast on any bad file), bind and serve.
pub async fn serve(config: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
    let engine = build_engine(&config.artifacts, config.decoder.clone())?;
    let router = app(engine, &config)?;
    let listener = TcpListener::bind(&config.listen).await?;
    serve_on(listener, router, shutdown).await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
