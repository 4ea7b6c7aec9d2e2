//! Heavy and light worker pools draining the store's queues.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread::JoinHandle;

use dq_core::method::QueueClass;

use crate::pipeline::{mark_failed, run_job, ServiceContext};
use crate::store::JobStore;

pub struct WorkerPool {
    store: Arc<JobStore>,
    handles: Vec<JoinHandle<()>>,
}

fn worker_loop(store: Arc<JobStore>, ctx: Arc<ServiceContext>, class: QueueClass) {
    loop {
        let job = match store.claim_wait(class, None) {
            Ok(Some(job)) => job,
            Ok(None) => return,
            Err(e) => {
                tracing::error!(queue = %class, error = %e, "claim failed");
                std::thread::sleep(std::time::Duration::from_millis(200));
                continue;
            }
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| run_job(&store, &ctx, &job)));
        if let Err(panic) = outcome {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "worker panicked".into());
            mark_failed(&store, &job.id, format!("internal error: {message}"));
        }
    }
}

impl WorkerPool {
    pub fn start(store: Arc<JobStore>, ctx: Arc<ServiceContext>, heavy: usize, light: usize) -> Self {
        let classes =
            std::iter::repeat_n(QueueClass::Heavy, heavy).chain(std::iter::repeat_n(QueueClass::Light, light));
        let handles = classes
            .enumerate()
            .map(|(i, class)| {
                let (store, ctx) = (store.clone(), ctx.clone());
                std::thread::Builder::new()
                    .name(format!("dq-{class}-{i}"))
                    .spawn(move || worker_loop(store, ctx, class))
                    .expect("spawning worker thread")
            })
            .collect();
        Self { store, handles }
    }

    /// Closes the store's queues and waits for running jobs to return.
    pub fn shutdown(self) {
        self.store.close();
        for h in self.handles {
            let _ = h.join();
        }
    }
}
