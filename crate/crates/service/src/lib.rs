//! HTTP/JSON front end: upload a CSV, preprocess it in the background, then
//! request sub-tables and browse mined rules.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /tables` | multipart upload (`file`, optional `options` JSON) |
//! | `GET /tables/{id}` | status, schema and size |
//! | `POST /tables/{id}/preprocess` | starts a job, returns its handle |
//! | `GET /jobs/{id}` | job status and phases |
//! | `POST /tables/{id}/subtable` | selects a sub-table |
//! | `GET /tables/{id}/rules?limit&offset` | rules by support, then confidence |

pub mod error;
pub mod state;

use axum::body::Bytes;
use axum::extract::multipart::{Multipart, MultipartError, MultipartRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use subtab_core::artifacts::{run_selection, SubtableRequest};
use subtab_core::config::Config;
use subtab_core::rules::MiningMode;
use subtab_core::selection::SubTableResult;
use subtab_core::table::Schema;
use tower_http::cors::CorsLayer;

pub use error::{ApiError, ApiResult};
pub use state::{AppState, Job, JobStatus, ServiceConfig, Status, UploadOptions, ARTIFACTS_DIR};

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_upload_bytes;
    Router::new()
        .route("/tables", post(upload))
        .route("/tables/{id}", get(table_info))
        .route("/tables/{id}/preprocess", post(preprocess))
        .route("/tables/{id}/subtable", post(subtable))
        .route("/tables/{id}/rules", get(rules))
        .route("/jobs/{id}", get(job))
        .layer(DefaultBodyLimit::max(limit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(state)).await
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableInfo {
    pub table_id: String,
    pub status: Status,
    pub n: usize,
    pub m: usize,
    pub schema: Schema,
    pub job_id: Option<String>,
    pub error: Option<String>,
}

fn multipart_error(e: MultipartError) -> ApiError {
    let status = e.status();
    let kind = if status == StatusCode::PAYLOAD_TOO_LARGE { "too-large" } else { "bad-request" };
    ApiError::new(status, kind, e.body_text())
}

async fn upload(
    State(state): State<AppState>,
    mp: Result<Multipart, MultipartRejection>,
) -> ApiResult<(StatusCode, Json<TableInfo>)> {
    let mut mp = mp.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut file = None;
    let mut options = UploadOptions::default();
    while let Some(field) = mp.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("file") => file = Some(field.bytes().await.map_err(multipart_error)?),
            Some("options") => {
                let text = field.text().await.map_err(multipart_error)?;
                options = serde_json::from_str(&text).map_err(error::body_error)?;
            }
            _ => {}
        }
    }
    let bytes = file.ok_or_else(|| ApiError::bad_request("multipart body has no `file` field"))?;
    let (id, table) = tokio::task::spawn_blocking(move || state.create_table(&bytes, options))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    tracing::info!(table = %id, rows = table.n_rows(), cols = table.n_cols(), "table uploaded");
    let info = TableInfo {
        table_id: id,
        status: Status::Loaded,
        n: table.n_rows(),
        m: table.n_cols(),
        schema: table.schema().clone(),
        job_id: None,
        error: None,
    };
    Ok((StatusCode::CREATED, Json(info)))
}

async fn table_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TableInfo>> {
    state.with_session(&id, |s| {
        Ok(Json(TableInfo {
            table_id: s.id.clone(),
            status: s.status,
            n: s.table.n_rows(),
            m: s.table.n_cols(),
            schema: s.table.schema().clone(),
            job_id: s.job.clone(),
            error: s.error.clone(),
        }))
    })
}

/// Preprocessing settings; omitted fields keep the server defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PreprocessBody {
    pub bins: Option<usize>,
    pub dim: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub negatives: Option<usize>,
    pub corpus_cap: Option<usize>,
    pub chunk: Option<usize>,
    pub learning_rate: Option<f32>,
    pub max_contexts: Option<usize>,
    pub workers: Option<usize>,
    pub rule_params: Option<RuleParams>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RuleParams {
    /// False skips rule mining.
    pub enabled: Option<bool>,
    pub mode: Option<MiningMode>,
    pub support: Option<f64>,
    pub confidence: Option<f64>,
    pub min_rule_size: Option<usize>,
    pub targets: Option<Vec<String>>,
}

impl PreprocessBody {
    pub fn apply(&self, base: &Config) -> Config {
        let mut c = base.clone();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(bins, dim, epochs, seed, negatives, corpus_cap, chunk, learning_rate, max_contexts, workers);
        if let Some(r) = &self.rule_params {
            if let Some(m) = r.mode {
                c.rule_mode = Some(m);
            }
            if r.enabled == Some(false) {
                c.rule_mode = None;
            }
            if let Some(v) = r.support {
                c.support = v;
            }
            if let Some(v) = r.confidence {
                c.confidence = v;
            }
            if let Some(v) = r.min_rule_size {
                c.min_rule_size = v;
            }
            if let Some(t) = &r.targets {
                c.rule_targets = t.clone();
            }
        }
        c
    }
}

async fn preprocess(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Job>)> {
    let req: PreprocessBody =
        if body.iter().all(u8::is_ascii_whitespace) { PreprocessBody::default() } else { serde_json::from_slice(&body).map_err(error::body_error)? };
    let config = req.apply(&state.config().base);
    config.validate()?;
    state.with_session(&id, |s| {
        for t in &config.rule_targets {
            if s.table.schema().index_of(t).is_none() {
                return Err(ApiError::invalid(format!("rule target {t:?} is not a column")));
            }
        }
        Ok(())
    })?;
    let (job, table) = state.begin_preprocess(&id, config.clone())?;
    let (worker, job_id) = (state.clone(), job.job_id.clone());
    tokio::task::spawn_blocking(move || worker.run_preprocess(&job_id, &id, &table, &config));
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    state.job(&id).map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

async fn subtable(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SubTableResult>> {
    let req: SubtableRequest = serde_json::from_slice(&body).map_err(error::body_error)?;
    let (table, artifacts) = state.with_session(&id, |s| {
        let art = if s.status == Status::Ready { s.artifacts.clone() } else { None };
        Ok((s.table.clone(), art))
    })?;
    let result = tokio::task::spawn_blocking(move || run_selection(&table, artifacts.as_deref(), &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(result))
}

#[derive(Debug, Deserialize)]
pub struct Page {
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

const DEFAULT_PAGE: usize = 100;

async fn rules(
    State(state): State<AppState>,
    Path(id): Path<String>,
    page: Result<Query<Page>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Json<Value>> {
    let Query(page) = page.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let art = state.with_session(&id, |s| Ok(if s.status == Status::Ready { s.artifacts.clone() } else { None }))?;
    let rs = art
        .as_ref()
        .and_then(|a| a.rules.as_ref())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no rules have been mined for table {id:?}")))?;
    let (limit, offset) = (page.limit.unwrap_or(DEFAULT_PAGE), page.offset.unwrap_or(0));
    let mut order: Vec<usize> = (0..rs.len()).collect();
    let r = rs.rules();
    order.sort_by(|&a, &b| r[b].support.total_cmp(&r[a].support).then(r[b].confidence.total_cmp(&r[a].confidence)));
    let items: Vec<Value> = order
        .iter()
        .skip(offset)
        .take(limit)
        .map(|&i| {
            let mut v = rs.rule_json(&r[i]);
            v["ruleId"] = json!(i);
            v
        })
        .collect();
    Ok(Json(json!({
        "tableId": id,
        "total": rs.len(),
        "offset": offset,
        "limit": limit,
        "provenance": rs.provenance(),
        "rules": items,
    })))
}
