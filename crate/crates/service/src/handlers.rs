use std::convert::Infallible;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use pdsim_core::diagnostics::{coverage_rate_with_progress, CoverageReport, DEFAULT_LEVEL, DEFAULT_THRESHOLD};
use pdsim_core::estimate::{estimate as run_estimate, rows, EstimateReport};
use pdsim_core::export;
use pdsim_core::simulator::{simulate as run_simulate, SimulatedPanel};
use pdsim_core::spec::{SimulationSpec, ValidatedSpec};
use pdsim_core::{FilterKind, Warning};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{parse_json, to_json, ApiError, AppState, PREVIEW_ROWS};

pub const MAX_TRAJECTORIES: usize = 100_000;
const NDJSON: &str = "application/x-ndjson";

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> pdsim_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal("worker", e.to_string()))?
        .map_err(ApiError::from)
}

fn json_response(status: StatusCode, value: &impl Serialize) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], to_json(value)).into_response()
}

pub async fn schema() -> Json<Value> {
    Json(pdsim_core::spec::schema())
}

#[derive(Debug, Serialize)]
struct Preview {
    prices: Vec<Vec<f64>>,
    maturities: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct SimulateResponse {
    token: String,
    model: pdsim_core::ModelKind,
    filter: FilterKind,
    n_obs: usize,
    m: usize,
    seed: u64,
    warnings: Vec<Warning>,
    preview: Preview,
    spec: SimulationSpec,
}

fn preview(panel: &SimulatedPanel) -> Preview {
    let k = PREVIEW_ROWS.min(panel.n());
    Preview {
        prices: rows(&panel.prices.rows(0, k).into_owned()),
        maturities: rows(&panel.maturities.rows(0, k).into_owned()),
        states: rows(&panel.states.rows(0, k).into_owned()),
    }
}

async fn simulate_spec(
    spec: SimulationSpec,
    max_obs: usize,
) -> Result<(SimulationSpec, ValidatedSpec, SimulatedPanel), ApiError> {
    let validated = spec.validate(Some(max_obs))?;
    let v = validated.clone();
    let panel = blocking(move || run_simulate(&v.params, &v.errs, &v.config)).await?;
    Ok((spec.effective(), validated, panel))
}

pub async fn simulate(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let spec: SimulationSpec = parse_json(&body)?;
    let (spec, validated, panel) = simulate_spec(spec, state.max_obs).await?;
    let record = state.sessions.insert(spec, validated, panel);
    log::info!(
        "simulate {} n={} m={} -> {}",
        record.spec.model,
        record.panel.n(),
        record.panel.m(),
        record.token
    );
    let resp = SimulateResponse {
        token: record.token.clone(),
        model: record.spec.model,
        filter: record.validated.config.filter_kind,
        n_obs: record.panel.n(),
        m: record.panel.m(),
        seed: record.validated.config.seed,
        warnings: record.validated.warnings.clone(),
        preview: preview(&record.panel),
        spec: record.spec.clone(),
    };
    Ok(json_response(StatusCode::OK, &resp))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateRequest {
    #[serde(default)]
    token: Option<String>,
    #[serde(default)]
    spec: Option<SimulationSpec>,
    #[serde(default)]
    filter: Option<FilterKind>,
    #[serde(default)]
    level: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EstimateResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    token: Option<String>,
    warnings: Vec<Warning>,
    #[serde(flatten)]
    report: EstimateReport,
}

fn from_value<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: crate::error::ErrorBody {
                error: e.inner().to_string(),
                field: Some(field),
                time_index: None,
                trajectory: None,
            },
        }
    })
}

/// Accepts `{token, filter?, level?}`, `{spec, filter?, level?}`, or a bare spec.
pub async fn estimate(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let value: Value = parse_json(&body)?;
    let req = if value.get("model").is_some() {
        EstimateRequest {
            token: None,
            spec: Some(from_value(value)?),
            filter: None,
            level: None,
        }
    } else {
        from_value::<EstimateRequest>(value)?
    };
    let level = req.level.unwrap_or(DEFAULT_LEVEL);

    let (token, validated, panel) = match (req.token, req.spec) {
        (Some(token), None) => {
            let record = state
                .sessions
                .get(&token)
                .ok_or_else(|| ApiError::not_found("token", "unknown or expired token"))?;
            (Some(token), record.validated.clone(), record.panel.clone())
        }
        (None, Some(spec)) => {
            let (_, validated, panel) = simulate_spec(spec, state.max_obs).await?;
            (None, validated, panel)
        }
        _ => return Err(ApiError::bad_request("token", "give exactly one of `token` or `spec`")),
    };
    let filter = req.filter.unwrap_or(validated.config.filter_kind);
    validated.params.kind().check_filter(filter)?;

    let warnings = validated.warnings.clone();
    let report = blocking(move || {
        let obs = panel.observation_panel(validated.config.dt)?;
        Ok(run_estimate(&validated.params, &validated.errs, filter, &obs, level)?.report())
    })
    .await?;
    Ok(json_response(
        StatusCode::OK,
        &EstimateResponse {
            token,
            warnings,
            report,
        },
    ))
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRequest {
    pub spec: SimulationSpec,
    pub n_traj: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Stream NDJSON progress events; also selected by `Accept: application/x-ndjson`.
    #[serde(default)]
    pub stream: bool,
}

#[derive(Debug, Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum CoverageEvent {
    Progress { completed: usize, n_traj: usize },
    Report { report: CoverageReport },
    Error { status: u16, #[serde(flatten)] body: crate::error::ErrorBody },
}

impl CoverageEvent {
    fn line(&self) -> Bytes {
        let mut s = serde_json::to_string(self).expect("events serialize");
        s.push('\n');
        Bytes::from(s)
    }
}

pub async fn coverage(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: CoverageRequest = parse_json(&body)?;
    if req.n_traj > MAX_TRAJECTORIES {
        return Err(ApiError::bad_request("n_traj", format!("at most {MAX_TRAJECTORIES} trajectories")));
    }
    let validated = req.spec.validate(Some(state.max_obs))?;
    let streaming = req.stream
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains(NDJSON));
    let (n_traj, level, threshold) = (req.n_traj, req.level, req.threshold);
    log::info!("coverage {} n_traj={n_traj} seed={}", req.spec.model, validated.config.seed);

    if !streaming {
        let report = blocking(move || {
            coverage_rate_with_progress(
                &validated.params,
                &validated.errs,
                &validated.config,
                n_traj,
                level,
                threshold,
                &|_| {},
            )
        })
        .await?;
        return Ok(json_response(StatusCode::OK, &report));
    }

    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<Bytes>();
    tokio::task::spawn_blocking(move || {
        let progress_tx = tx.clone();
        let result = coverage_rate_with_progress(
            &validated.params,
            &validated.errs,
            &validated.config,
            n_traj,
            level,
            threshold,
            &move |completed| {
                let _ = progress_tx.send(CoverageEvent::Progress { completed, n_traj }.line());
            },
        );
        let last = match result {
            Ok(report) => CoverageEvent::Report { report },
            Err(e) => {
                let err = ApiError::from(e);
                CoverageEvent::Error {
                    status: err.status.as_u16(),
                    body: err.body,
                }
            }
        };
        let _ = tx.send(last.line());
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|b| (Ok::<_, Infallible>(b), rx))
    });
    Ok(([(header::CONTENT_TYPE, NDJSON)], Body::from_stream(stream)).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    token: Option<String>,
}

pub async fn export(
    State(state): State<AppState>,
    Path(file): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let token = q
        .token
        .ok_or_else(|| ApiError::bad_request("token", "missing `token` query parameter"))?;
    let record = state
        .sessions
        .get(&token)
        .ok_or_else(|| ApiError::not_found("token", "unknown or expired token"))?;
    let body = match file.as_str() {
        "prices.csv" => export::prices_csv(&record.panel),
        "maturities.csv" => export::maturities_csv(&record.panel),
        "states.csv" => export::states_csv(&record.panel.states),
        _ => return Err(ApiError::not_found("file", format!("no export named `{file}`"))),
    };
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{file}\"")),
        ],
        body,
    )
        .into_response())
}
