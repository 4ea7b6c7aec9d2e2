//! Wires the store, workers and HTTP router into a running service.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::Router;
use chrono::Utc;
use dq_core::models::{ClientError, Clients, Registry};
use dq_core::synthetic::{PlantedConfig, PlantedPool};
use thiserror::Error;
use tokio::sync::oneshot;

use crate::api::{self, AppState};
use crate::config::{ConfigError, ServiceConfig};
use crate::pipeline::{install_collection, ServiceContext};
use crate::store::{CollectionRecord, JobStore, StoreError};
use crate::workers::WorkerPool;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct Service {
    pub store: Arc<JobStore>,
    pub ctx: Arc<ServiceContext>,
    pub config: ServiceConfig,
    workers: Option<WorkerPool>,
}

impl Service {
    /// Opens the data directory, runs recovery and starts the worker pools.
    pub fn open(config: ServiceConfig, registry: Registry, clients: Clients) -> Result<Self, ServiceError> {
        config.validate()?;
        let store = Arc::new(JobStore::open(&config.data_dir)?);
        for id in store.recovered_jobs() {
            tracing::info!(job = %id, "recovered job re-queued");
        }
        let ctx = Arc::new(ServiceContext {
            data_dir: config.data_dir.clone(),
            registry,
            clients,
            defaults: config.default_params(),
        });
        std::fs::create_dir_all(ctx.collections_root())?;
        let workers = WorkerPool::start(store.clone(), ctx.clone(), config.heavy_workers, config.light_workers);
        Ok(Self {
            store,
            ctx,
            config,
            workers: Some(workers),
        })
    }

    /// Registry and clients as described by the configuration.
    pub fn from_config(config: ServiceConfig) -> Result<Self, ServiceError> {
        let registry = config.registry()?;
        let clients = Clients::new().with_generator_endpoint(&config.generator_endpoint)?;
        Self::open(config, registry, clients)
    }

    /// Serves the planted synthetic pool, with its collection preinstalled as `planted-<seed>`.
    pub fn planted(config: ServiceConfig, seed: u64) -> Result<Self, ServiceError> {
        let pool = PlantedPool::generate(PlantedConfig::with_seed(seed));
        let clients = pool.clients().with_generator_endpoint(&config.generator_endpoint)?;
        let service = Self::open(config, pool.registry.clone(), clients)?;
        let id = planted_collection_id(seed);
        if service.store.collection(&id).is_none() {
            install_collection(&service.ctx, &id, &pool.collection)?;
            service.store.add_collection(CollectionRecord {
                id: id.clone(),
                name: format!("planted pool (seed {seed})"),
                created_at: Utc::now(),
                documents: pool.collection.corpus.len(),
                queries: pool.collection.queries.as_ref().map_or(0, Vec::len),
                has_qrels: pool.collection.qrels.is_some(),
            })?;
        }
        Ok(service)
    }

    pub fn router(&self) -> Router {
        let state = AppState {
            store: self.store.clone(),
            ctx: self.ctx.clone(),
            auth_token: self.config.auth_token.clone(),
            upload_cap_bytes: self.config.upload_cap_bytes,
        };
        api::router(state, self.config.static_dir.as_deref())
    }

    /// Stops accepting work and waits for in-flight jobs.
    pub fn shutdown(mut self) {
        if let Some(w) = self.workers.take() {
            w.shutdown();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        if let Some(w) = self.workers.take() {
            w.shutdown();
        }
    }
}

pub fn planted_collection_id(seed: u64) -> String {
    format!("planted-{seed}")
}

/// Serves `router` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}

/// An HTTP server on its own thread and runtime.
pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.halt()
    }

    fn halt(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.halt();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `router` in the background.
pub fn spawn(router: Router, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("dq-http".into()).spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            serve(listener, router, async {
                let _ = rx.await;
            })
            .await
        })
    })?;
    Ok(RunningServer {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
