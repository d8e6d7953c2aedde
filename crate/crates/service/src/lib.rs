//! JSON-over-HTTP facade over `pdsim-core`.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/v1/schema` | JSON Schema of the run spec |
//! | POST | `/api/v1/simulate` | simulate a panel, returns a session token |
//! | POST | `/api/v1/estimate` | filter a stored or inline panel |
//! | POST | `/api/v1/coverage` | coverage-rate check, optionally streamed as NDJSON |
//! | GET | `/api/v1/export/{prices,maturities,states}.csv?token=` | CSV download |

use std::future::Future;
use std::net::SocketAddr;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

mod error;
mod handlers;
pub mod session;

pub use error::ApiError;
pub use session::{SessionRecord, SessionStore};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_TTL_SECS: u64 = 3600;
pub const DEFAULT_MAX_OBS: usize = 100_000;
/// Number of rows echoed by `/simulate`.
pub const PREVIEW_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub ttl: Duration,
    pub max_obs: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            addr: DEFAULT_ADDR.parse().expect("default address parses"),
            ttl: Duration::from_secs(DEFAULT_TTL_SECS),
            max_obs: DEFAULT_MAX_OBS,
        }
    }
}

impl ServiceConfig {
    /// Reads `PDSIM_ADDR`, `PDSIM_TTL_SECS` and `PDSIM_MAX_OBS`.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut cfg = ServiceConfig::default();
        if let Some(v) = lookup("PDSIM_ADDR") {
            cfg.addr = v.parse().map_err(|e| format!("PDSIM_ADDR={v}: {e}"))?;
        }
        if let Some(v) = lookup("PDSIM_TTL_SECS") {
            let secs: u64 = v.parse().map_err(|e| format!("PDSIM_TTL_SECS={v}: {e}"))?;
            cfg.ttl = Duration::from_secs(secs);
        }
        if let Some(v) = lookup("PDSIM_MAX_OBS") {
            cfg.max_obs = v.parse().map_err(|e| format!("PDSIM_MAX_OBS={v}: {e}"))?;
        }
        Ok(cfg)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub sessions: SessionStore,
    pub max_obs: usize,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> Self {
        AppState {
            sessions: SessionStore::new(config.ttl),
            max_obs: config.max_obs,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/schema", get(handlers::schema))
        .route("/api/v1/simulate", post(handlers::simulate))
        .route("/api/v1/estimate", post(handlers::estimate))
        .route("/api/v1/coverage", post(handlers::coverage))
        .route("/api/v1/export/{file}", get(handlers::export))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Pretty JSON with a trailing newline, as written to disk and returned over HTTP.
pub fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Parses JSON, reporting the path of the first mismatching field.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(ApiError::from_path_error)?;
    de.end().map_err(|e| ApiError::bad_request("body", e.to_string()))?;
    Ok(value)
}
