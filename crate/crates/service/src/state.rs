//! Table sessions and preprocessing jobs.
//!
//! Each uploaded table lives in `<data dir>/tables/<id>/` as the original CSV
//! bytes plus `session.json`. Artifacts are shared across tables under
//! `<data dir>/artifacts/<cache key>/`, so a restart or a re-upload of the
//! same content with the same settings skips preprocessing.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use subtab_core::artifacts::{Artifacts, Phase};
use subtab_core::config::Config;
use subtab_core::table::{load_csv, CsvOptions, Table};

use crate::error::{ApiError, ApiResult};

const TABLES_DIR: &str = "tables";
/// Sub-directory of the data directory holding cached artifacts.
pub const ARTIFACTS_DIR: &str = "artifacts";
const UPLOAD_FILE: &str = "upload.csv";
const SESSION_FILE: &str = "session.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Loaded,
    Preprocessing,
    Ready,
    Failed,
}

/// CSV dialect of an upload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct UploadOptions {
    pub delimiter: char,
    pub has_header: bool,
    /// Cell texts read as missing; `None` keeps the loader's defaults.
    pub missing_tokens: Option<Vec<String>>,
}

impl Default for UploadOptions {
    fn default() -> Self {
        Self { delimiter: ',', has_header: true, missing_tokens: None }
    }
}

impl UploadOptions {
    pub fn csv_options(&self) -> ApiResult<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(ApiError::invalid("delimiter must be a single ASCII character"));
        }
        let mut o = CsvOptions { delimiter: self.delimiter as u8, has_header: self.has_header, ..CsvOptions::default() };
        if let Some(t) = &self.missing_tokens {
            o.missing_tokens = t.clone();
        }
        Ok(o)
    }
}

pub struct Session {
    pub id: String,
    pub table: Arc<Table>,
    pub options: UploadOptions,
    pub status: Status,
    pub config: Config,
    pub artifacts: Option<Arc<Artifacts>>,
    pub job: Option<String>,
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SessionFile {
    status: Status,
    options: UploadOptions,
    config: Config,
    artifact_key: Option<String>,
    error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Job {
    pub job_id: String,
    pub table_id: String,
    pub status: JobStatus,
    /// Phase in progress, if any.
    pub phase: Option<Phase>,
    pub completed_phases: Vec<Phase>,
    /// True when the artifacts came from the cache.
    pub cache_hit: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub max_upload_bytes: usize,
    /// Settings a preprocess request starts from.
    pub base: Config,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), max_upload_bytes: 256 << 20, base: Config::default() }
    }
}

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Session>>,
    jobs: Mutex<HashMap<String, Job>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}{:016x}", rand::random::<u64>())
}

fn io_error(e: impl std::fmt::Display) -> ApiError {
    ApiError::internal(e.to_string())
}

impl AppState {
    /// Opens the data directory and restores every persisted table.
    /// Tables whose preprocessing was cut short come back as failed.
    pub fn open(config: ServiceConfig) -> std::io::Result<Self> {
        let tables = config.data_dir.join(TABLES_DIR);
        fs::create_dir_all(&tables)?;
        fs::create_dir_all(config.data_dir.join(ARTIFACTS_DIR))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&tables)? {
            let dir = entry?.path();
            let Some(id) = dir.file_name().and_then(|s| s.to_str()).map(String::from) else { continue };
            match restore(&config, &id, &dir) {
                Ok(s) => {
                    sessions.insert(id, s);
                }
                Err(e) => tracing::warn!(table = %id, error = %e.message, "skipping unreadable table"),
            }
        }
        tracing::info!(tables = sessions.len(), dir = %config.data_dir.display(), "data directory opened");
        Ok(Self { inner: Arc::new(Inner { config, sessions: Mutex::new(sessions), jobs: Mutex::new(HashMap::new()) }) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.inner.config.data_dir.join(ARTIFACTS_DIR)
    }

    fn table_dir(&self, id: &str) -> PathBuf {
        self.inner.config.data_dir.join(TABLES_DIR).join(id)
    }

    /// Parses and stores an upload as a new table.
    pub fn create_table(&self, bytes: &[u8], options: UploadOptions) -> ApiResult<(String, Arc<Table>)> {
        let table = Arc::new(load_csv(bytes, &options.csv_options()?)?);
        let id = new_id("t");
        let dir = self.table_dir(&id);
        fs::create_dir_all(&dir).map_err(io_error)?;
        fs::write(dir.join(UPLOAD_FILE), bytes).map_err(io_error)?;
        let session = Session {
            id: id.clone(),
            table: table.clone(),
            options,
            status: Status::Loaded,
            config: self.inner.config.base.clone(),
            artifacts: None,
            job: None,
            error: None,
        };
        self.persist(&session)?;
        lock(&self.inner.sessions).insert(id.clone(), session);
        Ok((id, table))
    }

    fn persist(&self, s: &Session) -> ApiResult<()> {
        let file = SessionFile {
            status: s.status,
            options: s.options.clone(),
            config: s.config.clone(),
            artifact_key: s.artifacts.as_ref().map(|a| a.key.clone()),
            error: s.error.clone(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(io_error)?;
        let dir = self.table_dir(&s.id);
        let tmp = dir.join(format!("{SESSION_FILE}.tmp"));
        fs::write(&tmp, text).map_err(io_error)?;
        fs::rename(tmp, dir.join(SESSION_FILE)).map_err(io_error)
    }

    /// Runs `f` on a session under the sessions lock.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        let mut sessions = lock(&self.inner.sessions);
        let s = sessions.get_mut(id).ok_or_else(|| ApiError::not_found("table", id))?;
        f(s)
    }

    pub fn job(&self, id: &str) -> Option<Job> {
        lock(&self.inner.jobs).get(id).cloned()
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(j) = lock(&self.inner.jobs).get_mut(id) {
            f(j);
        }
    }

    /// Marks the table as preprocessing and registers a job for it. Fails
    /// with 409 while another job runs on the same table.
    pub fn begin_preprocess(&self, table_id: &str, config: Config) -> ApiResult<(Job, Arc<Table>)> {
        let mut sessions = lock(&self.inner.sessions);
        let s = sessions.get_mut(table_id).ok_or_else(|| ApiError::not_found("table", table_id))?;
        if s.status == Status::Preprocessing {
            return Err(ApiError::conflict(format!(
                "table {table_id:?} is already being preprocessed by job {:?}",
                s.job.as_deref().unwrap_or("")
            )));
        }
        let job = Job {
            job_id: new_id("j"),
            table_id: table_id.to_string(),
            status: JobStatus::Running,
            phase: None,
            completed_phases: Vec::new(),
            cache_hit: None,
            error: None,
        };
        s.status = Status::Preprocessing;
        s.config = config;
        s.job = Some(job.job_id.clone());
        s.error = None;
        self.persist(s)?;
        lock(&self.inner.jobs).insert(job.job_id.clone(), job.clone());
        Ok((job, s.table.clone()))
    }

    /// Body of a preprocessing job; meant for a blocking worker thread.
    pub fn run_preprocess(&self, job_id: &str, table_id: &str, table: &Table, config: &Config) {
        let mut progress = |p: Phase| {
            self.update_job(job_id, |j| {
                if let Some(done) = j.phase.replace(p) {
                    j.completed_phases.push(done);
                }
            })
        };
        let outcome = Artifacts::load_or_preprocess(table, config, &self.artifacts_dir(), &mut progress);
        let mut sessions = lock(&self.inner.sessions);
        let Some(s) = sessions.get_mut(table_id) else { return };
        match outcome {
            Ok((art, hit)) => {
                tracing::info!(table = %table_id, key = %art.key, cache_hit = hit, "preprocessing finished");
                s.status = Status::Ready;
                s.artifacts = Some(Arc::new(art));
                self.update_job(job_id, |j| {
                    if let Some(done) = j.phase.take() {
                        j.completed_phases.push(done);
                    }
                    j.status = JobStatus::Succeeded;
                    j.cache_hit = Some(hit);
                });
            }
            Err(e) => {
                tracing::warn!(table = %table_id, error = %e, "preprocessing failed");
                s.status = Status::Failed;
                s.artifacts = None;
                s.error = Some(e.to_string());
                self.update_job(job_id, |j| {
                    j.status = JobStatus::Failed;
                    j.error = Some(e.to_string());
                });
            }
        }
        if let Err(e) = self.persist(s) {
            tracing::warn!(table = %table_id, error = %e.message, "could not persist session");
        }
    }
}

fn restore(config: &ServiceConfig, id: &str, dir: &Path) -> ApiResult<Session> {
    let file: SessionFile =
        serde_json::from_str(&fs::read_to_string(dir.join(SESSION_FILE)).map_err(io_error)?).map_err(io_error)?;
    let bytes = fs::read(dir.join(UPLOAD_FILE)).map_err(io_error)?;
    let table = Arc::new(load_csv(bytes.as_slice(), &file.options.csv_options()?)?);
    let mut s = Session {
        id: id.to_string(),
        table,
        options: file.options,
        status: file.status,
        config: file.config,
        artifacts: None,
        job: None,
        error: file.error,
    };
    match s.status {
        Status::Ready => match file.artifact_key {
            Some(key) => match Artifacts::load(&s.table, &config.data_dir.join(ARTIFACTS_DIR).join(&key)) {
                Ok(a) => s.artifacts = Some(Arc::new(a)),
                Err(e) => {
                    s.status = Status::Failed;
                    s.error = Some(format!("artifacts could not be reloaded: {e}"));
                }
            },
            None => s.status = Status::Loaded,
        },
        Status::Preprocessing => {
            s.status = Status::Failed;
            s.error = Some("preprocessing was interrupted by a restart".into());
        }
        Status::Loaded | Status::Failed => {}
    }
    Ok(s)
}
