//! The two-stage job pipeline: corpus encoding, then model selection.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dq_core::corpus::{Collection, CorpusError};
use dq_core::embeddings::{self, EmbeddingMatrix};
use dq_core::method::QueueClass;
use dq_core::models::{Clients, Registry};
use dq_core::selection::{ensure_embeddings, run_method};
use dq_core::{Method, SelectionError, SelectionInput, SelectionParams};
use thiserror::Error;

use crate::store::{Job, JobState, JobStore, StoreError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Everything a worker needs besides the store.
pub struct ServiceContext {
    pub data_dir: PathBuf,
    pub registry: Registry,
    pub clients: Clients,
    /// Parameters a job starts from before its own overrides.
    pub defaults: SelectionParams,
}

impl ServiceContext {
    pub fn collections_root(&self) -> PathBuf {
        self.data_dir.join("collections")
    }

    /// Holds the collection files and the per-model `.dqv` cache.
    pub fn collection_dir(&self, collection_id: &str) -> PathBuf {
        self.collections_root().join(collection_id)
    }

    /// Header-only check that every model has a cached matrix of the right shape.
    pub fn embeddings_cached(&self, collection_id: &str, documents: usize) -> bool {
        let dir = self.collection_dir(collection_id);
        self.registry.iter().all(|m| {
            matches!(embeddings::header_of(&embeddings::path_for(&dir, &m.model_id)),
                Ok((dim, count)) if dim == m.dim && count == documents)
        })
    }

    pub fn queue_class(&self, method: Method, collection_id: &str, documents: usize) -> QueueClass {
        method.queue_class(method.requires_embeddings() && self.embeddings_cached(collection_id, documents))
    }
}

fn percent(done: usize, total: usize) -> f64 {
    if total == 0 {
        100.0
    } else {
        done as f64 * 100.0 / total as f64
    }
}

fn report(store: &JobStore, id: &str, done: usize, total: usize) {
    if let Err(e) = store.set_progress(id, percent(done, total)) {
        tracing::warn!(job = %id, error = %e, "progress update failed");
    }
}

fn execute(store: &JobStore, ctx: &ServiceContext, job: &Job) -> Result<(), PipelineError> {
    let dir = ctx.collection_dir(&job.collection_id);
    let collection = Collection::load_dir(&dir)?;

    let embeddings: BTreeMap<String, EmbeddingMatrix> = if job.method.requires_embeddings() {
        ensure_embeddings(
            &dir,
            &collection.corpus,
            &ctx.registry,
            &ctx.clients,
            job.params.batch_size,
            |done, total| report(store, &job.id, done, total),
        )?
    } else {
        report(store, &job.id, 1, 1);
        BTreeMap::new()
    };

    store.transition(&job.id, JobState::Selecting)?;
    let input = SelectionInput {
        corpus: &collection.corpus,
        queries: collection.queries.as_deref(),
        registry: &ctx.registry,
        embeddings: &embeddings,
        clients: &ctx.clients,
    };
    let result = run_method(&input, job.method, &job.params, |done, total| {
        report(store, &job.id, done, total)
    })?;
    store.finish(&job.id, result)?;
    Ok(())
}

/// Runs a claimed job to FINISHED, or to FAILED with the error message.
pub fn run_job(store: &JobStore, ctx: &ServiceContext, job: &Job) -> JobState {
    tracing::info!(job = %job.id, method = %job.method, "job started");
    match execute(store, ctx, job) {
        Ok(()) => {
            tracing::info!(job = %job.id, "job finished");
            JobState::Finished
        }
        Err(e) => {
            tracing::warn!(job = %job.id, error = %e, "job failed");
            mark_failed(store, &job.id, e.to_string())
        }
    }
}

pub(crate) fn mark_failed(store: &JobStore, id: &str, message: String) -> JobState {
    match store.fail(id, message) {
        Ok(j) => j.state,
        Err(e) => {
            tracing::error!(job = %id, error = %e, "could not record failure");
            store.job(id).map(|j| j.state).unwrap_or(JobState::Failed)
        }
    }
}

/// Copies a collection into the data directory layout.
pub fn install_collection(ctx: &ServiceContext, collection_id: &str, collection: &Collection) -> std::io::Result<()> {
    collection.save_dir(&ctx.collection_dir(collection_id))
}
