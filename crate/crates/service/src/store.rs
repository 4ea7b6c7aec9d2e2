//! Durable job, result and collection records.
//!
//! Each entity kind has an append-only JSON-lines log in the data directory.
//! On open the logs are replayed into memory (last record per id wins), a torn
//! final line from an interrupted write is discarded, and jobs left in an
//! active state by a previous process are put back in their queue. All
//! mutations go through one mutex, so the log order is the commit order.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use chrono::{DateTime, Utc};
use dq_core::method::QueueClass;
use dq_core::{Method, SelectionParams, SelectionResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOBS_LOG: &str = "jobs.log";
pub const RESULTS_LOG: &str = "results.log";
pub const COLLECTIONS_LOG: &str = "collections.log";

pub const STAGE_ENCODING: &str = "Dataset Encoding";
pub const STAGE_SELECTION: &str = "Model Selection";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("job {0:?} not found")]
    JobNotFound(String),
    #[error("no result for job {0:?}")]
    ResultNotFound(String),
    #[error("collection {0:?} not found")]
    UnknownCollection(String),
    #[error("collection {0:?} already exists")]
    DuplicateCollection(String),
    #[error("job {id}: illegal transition {from} -> {to}")]
    IllegalTransition { id: String, from: JobState, to: JobState },
    #[error("{path}: unreadable record on line {line}: {reason}")]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Pending,
    Encoding,
    Selecting,
    Finished,
    Failed,
}

impl JobState {
    pub const ALL: [JobState; 5] = [
        JobState::Pending,
        JobState::Encoding,
        JobState::Selecting,
        JobState::Finished,
        JobState::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Finished | JobState::Failed)
    }

    pub fn is_active(self) -> bool {
        matches!(self, JobState::Encoding | JobState::Selecting)
    }

    /// The allowed edges: the pipeline order, plus any non-terminal state to FAILED.
    pub fn can_advance_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Pending, Encoding) | (Encoding, Selecting) | (Selecting, Finished)
        ) || (!self.is_terminal() && next == Failed)
    }

    /// Progress-bar label of an active state.
    pub fn stage(self) -> Option<&'static str> {
        match self {
            JobState::Encoding => Some(STAGE_ENCODING),
            JobState::Selecting => Some(STAGE_SELECTION),
            _ => None,
        }
    }
}

impl std::fmt::Display for JobState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            JobState::Pending => "PENDING",
            JobState::Encoding => "ENCODING",
            JobState::Selecting => "SELECTING",
            JobState::Finished => "FINISHED",
            JobState::Failed => "FAILED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub collection_id: String,
    pub method: Method,
    pub params: SelectionParams,
    pub state: JobState,
    pub queue_class: QueueClass,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    /// Label of the active stage, if any.
    pub stage: Option<String>,
    /// Completion of the active stage, 0 to 100.
    pub progress_percent: f64,
    pub error: Option<String>,
    pub result_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResult {
    pub job_id: String,
    pub completed_at: DateTime<Utc>,
    #[serde(flatten)]
    pub result: SelectionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionRecord {
    pub id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub documents: usize,
    pub queries: usize,
    pub has_qrels: bool,
}

/// One line of the jobs log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JobLogEntry {
    Submit {
        job: Job,
    },
    Update {
        job: Job,
    },
    /// An orphaned active job put back in the queue on startup.
    Recover {
        from: JobState,
        job: Job,
    },
}

impl JobLogEntry {
    pub fn job(&self) -> &Job {
        match self {
            JobLogEntry::Submit { job } | JobLogEntry::Update { job } | JobLogEntry::Recover { job, .. } => job,
        }
    }
}

struct AppendLog {
    file: Option<File>,
}

impl AppendLog {
    fn ephemeral() -> Self {
        Self { file: None }
    }

    fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Some(file) })
    }

    fn append<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        let Some(file) = &mut self.file else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()
    }
}

/// Reads a JSON-lines log. A final line that is unterminated or unparsable is
/// a torn write: it is dropped and the file truncated to the last good record.
pub fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut good_len: u64 = 0;
    let mut line = Vec::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let terminated = line.last() == Some(&b'\n');
        let parsed = serde_json::from_slice::<T>(&line);
        match parsed {
            Ok(r) if terminated => {
                records.push(r);
                good_len += n as u64;
            }
            Ok(_) | Err(_) => {
                let at_end = reader.fill_buf()?.is_empty();
                if !at_end {
                    let reason = match parsed {
                        Err(e) => e.to_string(),
                        Ok(_) => "unterminated record".into(),
                    };
                    return Err(StoreError::CorruptLog {
                        path: path.to_path_buf(),
                        line: line_no,
                        reason,
                    });
                }
                if line.iter().all(u8::is_ascii_whitespace) {
                    break;
                }
                tracing::warn!(path = %path.display(), line = line_no, "discarding torn final record");
                OpenOptions::new().write(true).open(path)?.set_len(good_len)?;
                break;
            }
        }
    }
    Ok(records)
}

fn queue_index(class: QueueClass) -> usize {
    match class {
        QueueClass::Heavy => 0,
        QueueClass::Light => 1,
    }
}

fn parse_counter(id: &str, prefix: &str) -> u64 {
    id.strip_prefix(prefix).and_then(|n| n.parse().ok()).unwrap_or(0)
}

const JOB_PREFIX: &str = "job-";
const COLLECTION_PREFIX: &str = "col-";

struct Inner {
    jobs: BTreeMap<String, Job>,
    results: BTreeMap<String, StoredResult>,
    collections: BTreeMap<String, CollectionRecord>,
    queues: [VecDeque<String>; 2],
    job_log: AppendLog,
    result_log: AppendLog,
    collection_log: AppendLog,
    next_job: u64,
    next_collection: u64,
    closed: bool,
}

pub struct JobStore {
    inner: Mutex<Inner>,
    wake: Condvar,
    data_dir: Option<PathBuf>,
    recovered: Vec<String>,
}

impl JobStore {
    /// A store that keeps everything in memory.
    pub fn ephemeral() -> Self {
        Self {
            inner: Mutex::new(Inner {
                jobs: BTreeMap::new(),
                results: BTreeMap::new(),
                collections: BTreeMap::new(),
                queues: Default::default(),
                job_log: AppendLog::ephemeral(),
                result_log: AppendLog::ephemeral(),
                collection_log: AppendLog::ephemeral(),
                next_job: 1,
                next_collection: 1,
                closed: false,
            }),
            wake: Condvar::new(),
            data_dir: None,
            recovered: Vec::new(),
        }
    }

    /// Opens (or creates) the logs in `dir` and runs the recovery scan.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let job_entries: Vec<JobLogEntry> = read_log(&dir.join(JOBS_LOG))?;
        let results: Vec<StoredResult> = read_log(&dir.join(RESULTS_LOG))?;
        let collections: Vec<CollectionRecord> = read_log(&dir.join(COLLECTIONS_LOG))?;

        let mut jobs = BTreeMap::new();
        for entry in job_entries {
            let job = entry.job().clone();
            jobs.insert(job.id.clone(), job);
        }
        let mut inner = Inner {
            next_job: jobs.keys().map(|id| parse_counter(id, JOB_PREFIX)).max().unwrap_or(0) + 1,
            next_collection: collections
                .iter()
                .map(|c| parse_counter(&c.id, COLLECTION_PREFIX))
                .max()
                .unwrap_or(0)
                + 1,
            jobs,
            results: results.into_iter().map(|r| (r.job_id.clone(), r)).collect(),
            collections: collections.into_iter().map(|c| (c.id.clone(), c)).collect(),
            queues: Default::default(),
            job_log: AppendLog::open(&dir.join(JOBS_LOG))?,
            result_log: AppendLog::open(&dir.join(RESULTS_LOG))?,
            collection_log: AppendLog::open(&dir.join(COLLECTIONS_LOG))?,
            closed: false,
        };

        let mut recovered = Vec::new();
        let orphans: Vec<String> = inner
            .jobs
            .values()
            .filter(|j| j.state.is_active())
            .map(|j| j.id.clone())
            .collect();
        for id in orphans {
            let job = inner.jobs.get_mut(&id).unwrap();
            let from = job.state;
            job.state = JobState::Pending;
            job.stage = None;
            job.progress_percent = 0.0;
            job.updated_at = Utc::now().max(job.updated_at);
            let record = JobLogEntry::Recover { from, job: job.clone() };
            inner.job_log.append(&record)?;
            tracing::info!(job = %id, from = %from, "re-queued orphaned job");
            recovered.push(id);
        }

        let mut pending: Vec<&Job> = inner.jobs.values().filter(|j| j.state == JobState::Pending).collect();
        pending.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        let queued: Vec<(usize, String)> = pending
            .into_iter()
            .map(|j| (queue_index(j.queue_class), j.id.clone()))
            .collect();
        for (q, id) in queued {
            inner.queues[q].push_back(id);
        }

        Ok(Self {
            inner: Mutex::new(inner),
            wake: Condvar::new(),
            data_dir: Some(dir.to_path_buf()),
            recovered,
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    /// Jobs the recovery scan put back in a queue.
    pub fn recovered_jobs(&self) -> &[String] {
        &self.recovered
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn next_collection_id(&self) -> String {
        let mut inner = self.lock();
        let id = format!("{COLLECTION_PREFIX}{:06}", inner.next_collection);
        inner.next_collection += 1;
        id
    }

    pub fn add_collection(&self, record: CollectionRecord) -> Result<(), StoreError> {
        let mut inner = self.lock();
        if inner.collections.contains_key(&record.id) {
            return Err(StoreError::DuplicateCollection(record.id));
        }
        inner.collection_log.append(&record)?;
        inner.collections.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn collection(&self, id: &str) -> Option<CollectionRecord> {
        self.lock().collections.get(id).cloned()
    }

    /// Ordered by creation time, then id.
    pub fn collections(&self) -> Vec<CollectionRecord> {
        let mut all: Vec<CollectionRecord> = self.lock().collections.values().cloned().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        all
    }

    /// Persists a new PENDING job and appends it to its queue.
    pub fn submit(
        &self,
        collection_id: &str,
        method: Method,
        params: SelectionParams,
        queue_class: QueueClass,
    ) -> Result<Job, StoreError> {
        let mut inner = self.lock();
        if !inner.collections.contains_key(collection_id) {
            return Err(StoreError::UnknownCollection(collection_id.to_string()));
        }
        let now = Utc::now();
        let job = Job {
            id: format!("{JOB_PREFIX}{:08}", inner.next_job),
            collection_id: collection_id.to_string(),
            method,
            params,
            state: JobState::Pending,
            queue_class,
            created_at: now,
            updated_at: now,
            stage: None,
            progress_percent: 0.0,
            error: None,
            result_ref: None,
        };
        inner.job_log.append(&JobLogEntry::Submit { job: job.clone() })?;
        inner.next_job += 1;
        inner.jobs.insert(job.id.clone(), job.clone());
        inner.queues[queue_index(queue_class)].push_back(job.id.clone());
        drop(inner);
        self.wake.notify_all();
        Ok(job)
    }

    fn claim_locked(inner: &mut Inner, class: QueueClass) -> Result<Option<Job>, StoreError> {
        while let Some(id) = inner.queues[queue_index(class)].pop_front() {
            if inner.jobs.get(&id).is_some_and(|j| j.state == JobState::Pending) {
                let job = Self::apply(inner, &id, Some(JobState::Encoding), |j| {
                    j.stage = JobState::Encoding.stage().map(String::from);
                    j.progress_percent = 0.0;
                })?;
                return Ok(Some(job));
            }
        }
        Ok(None)
    }

    /// Atomically takes the oldest PENDING job of `class` and moves it to ENCODING.
    pub fn claim(&self, class: QueueClass) -> Result<Option<Job>, StoreError> {
        Self::claim_locked(&mut self.lock(), class)
    }

    /// Like [`claim`](Self::claim), waiting up to `timeout` for a job.
    /// Returns `None` on timeout or once the store is closed.
    pub fn claim_wait(&self, class: QueueClass, timeout: Option<Duration>) -> Result<Option<Job>, StoreError> {
        let deadline = timeout.map(|t| std::time::Instant::now() + t);
        let mut inner = self.lock();
        loop {
            if inner.closed {
                return Ok(None);
            }
            if let Some(job) = Self::claim_locked(&mut inner, class)? {
                return Ok(Some(job));
            }
            inner = match deadline {
                None => self.wake.wait(inner).unwrap_or_else(|e| e.into_inner()),
                Some(d) => {
                    let now = std::time::Instant::now();
                    if now >= d {
                        return Ok(None);
                    }
                    self.wake
                        .wait_timeout(inner, d - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0
                }
            };
        }
    }

    /// Wakes every waiting worker; subsequent waits return `None`.
    pub fn close(&self) {
        self.lock().closed = true;
        self.wake.notify_all();
    }

    /// Applies `change` and logs the job. With `target` set the job must move along that edge.
    fn apply(
        inner: &mut Inner,
        id: &str,
        target: Option<JobState>,
        change: impl FnOnce(&mut Job),
    ) -> Result<Job, StoreError> {
        let current = inner
            .jobs
            .get(id)
            .ok_or_else(|| StoreError::JobNotFound(id.to_string()))?;
        if let Some(to) = target {
            if !current.state.can_advance_to(to) {
                return Err(StoreError::IllegalTransition {
                    id: id.to_string(),
                    from: current.state,
                    to,
                });
            }
        }
        let mut job = current.clone();
        change(&mut job);
        if let Some(to) = target {
            job.state = to;
        }
        debug_assert!(job.state == current.state || target.is_some());
        job.updated_at = Utc::now().max(current.updated_at);
        inner.job_log.append(&JobLogEntry::Update { job: job.clone() })?;
        inner.jobs.insert(id.to_string(), job.clone());
        Ok(job)
    }

    /// Moves a job along one allowed edge, resetting stage progress.
    pub fn transition(&self, id: &str, next: JobState) -> Result<Job, StoreError> {
        Self::apply(&mut self.lock(), id, Some(next), |j| {
            j.stage = next.stage().map(String::from);
            j.progress_percent = if next.is_terminal() { 100.0 } else { 0.0 };
        })
    }

    /// Updates the progress of the job's active stage.
    pub fn set_progress(&self, id: &str, percent: f64) -> Result<Job, StoreError> {
        Self::apply(&mut self.lock(), id, None, |j| {
            if j.state.is_active() {
                j.progress_percent = percent.clamp(0.0, 100.0);
            }
        })
    }

    pub fn fail(&self, id: &str, error: impl Into<String>) -> Result<Job, StoreError> {
        let error = error.into();
        Self::apply(&mut self.lock(), id, Some(JobState::Failed), |j| {
            j.error = Some(error);
        })
    }

    /// Persists the result, then marks the job FINISHED with a reference to it.
    pub fn finish(&self, id: &str, result: SelectionResult) -> Result<Job, StoreError> {
        let mut inner = self.lock();
        let state = inner
            .jobs
            .get(id)
            .ok_or_else(|| StoreError::JobNotFound(id.to_string()))?
            .state;
        if !state.can_advance_to(JobState::Finished) {
            return Err(StoreError::IllegalTransition {
                id: id.to_string(),
                from: state,
                to: JobState::Finished,
            });
        }
        let stored = StoredResult {
            job_id: id.to_string(),
            completed_at: Utc::now(),
            result,
        };
        inner.result_log.append(&stored)?;
        inner.results.insert(id.to_string(), stored);
        Self::apply(&mut inner, id, Some(JobState::Finished), |j| {
            j.stage = None;
            j.progress_percent = 100.0;
            j.result_ref = Some(id.to_string());
        })
    }

    pub fn job(&self, id: &str) -> Result<Job, StoreError> {
        self.lock()
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::JobNotFound(id.to_string()))
    }

    /// Ordered by creation time, then id.
    pub fn jobs(&self) -> Vec<Job> {
        let mut all: Vec<Job> = self.lock().jobs.values().cloned().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        all
    }

    /// Present only once the job is FINISHED.
    pub fn result(&self, job_id: &str) -> Result<StoredResult, StoreError> {
        let inner = self.lock();
        match inner.jobs.get(job_id) {
            None => Err(StoreError::JobNotFound(job_id.to_string())),
            Some(j) if j.state != JobState::Finished => Err(StoreError::ResultNotFound(job_id.to_string())),
            Some(_) => inner
                .results
                .get(job_id)
                .cloned()
                .ok_or_else(|| StoreError::ResultNotFound(job_id.to_string())),
        }
    }

    pub fn queue_len(&self, class: QueueClass) -> usize {
        let inner = self.lock();
        inner.queues[queue_index(class)]
            .iter()
            .filter(|id| inner.jobs.get(*id).is_some_and(|j| j.state == JobState::Pending))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collection(id: &str) -> CollectionRecord {
        CollectionRecord {
            id: id.into(),
            name: id.into(),
            created_at: Utc::now(),
            documents: 1,
            queries: 0,
            has_qrels: false,
        }
    }

    fn store_with_collection() -> JobStore {
        let s = JobStore::ephemeral();
        s.add_collection(collection("c")).unwrap();
        s
    }

    #[test]
    fn transition_table() {
        use JobState::*;
        let allowed: Vec<(JobState, JobState)> = JobState::ALL
            .iter()
            .flat_map(|&a| JobState::ALL.iter().map(move |&b| (a, b)))
            .filter(|(a, b)| a.can_advance_to(*b))
            .collect();
        assert_eq!(
            allowed,
            [
                (Pending, Encoding),
                (Pending, Failed),
                (Encoding, Selecting),
                (Encoding, Failed),
                (Selecting, Finished),
                (Selecting, Failed)
            ]
        );
    }

    #[test]
    fn fifo_within_class() {
        let s = store_with_collection();
        let p = SelectionParams::default();
        let a = s.submit("c", Method::Fusion, p.clone(), QueueClass::Light).unwrap();
        let h = s.submit("c", Method::Larmor, p.clone(), QueueClass::Heavy).unwrap();
        let b = s.submit("c", Method::Nqc, p, QueueClass::Light).unwrap();
        assert_eq!(s.claim(QueueClass::Light).unwrap().unwrap().id, a.id);
        assert_eq!(s.claim(QueueClass::Light).unwrap().unwrap().id, b.id);
        assert!(s.claim(QueueClass::Light).unwrap().is_none());
        let claimed = s.claim(QueueClass::Heavy).unwrap().unwrap();
        assert_eq!((claimed.id, claimed.state), (h.id, JobState::Encoding));
    }

    #[test]
    fn results_only_when_finished() {
        let s = store_with_collection();
        let job = s
            .submit("c", Method::Msmarco, SelectionParams::default(), QueueClass::Light)
            .unwrap();
        assert!(matches!(s.result(&job.id), Err(StoreError::ResultNotFound(_))));
        assert!(matches!(
            s.transition(&job.id, JobState::Selecting),
            Err(StoreError::IllegalTransition { .. })
        ));
        assert!(matches!(
            s.submit("nope", Method::Nqc, SelectionParams::default(), QueueClass::Light),
            Err(StoreError::UnknownCollection(_))
        ));
    }

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(COLLECTIONS_LOG);
        let good = serde_json::to_string(&collection("col-000001")).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"id\":\"col-0")).unwrap();
        let read: Vec<CollectionRecord> = read_log(&path).unwrap();
        assert_eq!(read.len(), 1);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{good}\n"));

        std::fs::write(&path, format!("garbage\n{good}\n")).unwrap();
        assert!(matches!(
            read_log::<CollectionRecord>(&path),
            Err(StoreError::CorruptLog { line: 1, .. })
        ));
    }

    #[test]
    fn reopen_recovers_active_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let s = JobStore::open(dir.path()).unwrap();
            s.add_collection(collection("c")).unwrap();
            let job = s
                .submit("c", Method::Fusion, SelectionParams::default(), QueueClass::Light)
                .unwrap();
            s.claim(QueueClass::Light).unwrap().unwrap();
            s.transition(&job.id, JobState::Selecting).unwrap();
            job.id
        };
        let s = JobStore::open(dir.path()).unwrap();
        assert_eq!(s.recovered_jobs(), std::slice::from_ref(&id));
        assert_eq!(s.job(&id).unwrap().state, JobState::Pending);
        assert_eq!(s.claim(QueueClass::Light).unwrap().unwrap().id, id);
        let next = s
            .submit("c", Method::Nqc, SelectionParams::default(), QueueClass::Light)
            .unwrap();
        assert_eq!(next.id, "job-00000002");
    }
}
