//! Job service for ranking dense retrievers on an unjudged collection.
//!
//! A [`JobStore`] persists collections, jobs and results as append-only logs.
//! Worker pools claim jobs from a heavy and a light queue and run them through
//! [`pipeline::run_job`]: encode the corpus with every registry model, then
//! score the models with the requested method. [`api::router`] exposes all of
//! it over HTTP and [`cli`] is the `dq` binary.

pub mod api;
pub mod cli;
pub mod config;
pub mod encoder_server;
pub mod pipeline;
pub mod server;
pub mod store;
pub mod workers;

pub use config::ServiceConfig;
pub use server::{spawn, RunningServer, Service};
pub use store::{Job, JobState, JobStore, StoredResult};
