//! Job lifecycle on the durable store: submit, claim, advance, finish, then
//! reopen the data directory after an interrupted job to see it re-queued.
//!
//! cargo run -p dq-service --example job_store

use chrono::Utc;
use dq_core::method::QueueClass;
use dq_core::{Method, SelectionParams, SelectionResult};
use dq_service::store::{CollectionRecord, JobLogEntry, JOBS_LOG};
use dq_service::{JobState, JobStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = JobStore::open(dir.path())?;
    store.add_collection(CollectionRecord {
        id: "col-000001".into(),
        name: "demo".into(),
        created_at: Utc::now(),
        documents: 3,
        queries: 1,
        has_qrels: false,
    })?;

    let done = store.submit("col-000001", Method::Nqc, SelectionParams::default(), QueueClass::Light)?;
    let stuck = store.submit(
        "col-000001",
        Method::Larmor,
        SelectionParams::default(),
        QueueClass::Heavy,
    )?;

    let claimed = store.claim(QueueClass::Light)?.expect("queued job");
    println!("{} claimed: {} / {:?}", claimed.id, claimed.state, claimed.stage);
    store.set_progress(&done.id, 100.0)?;
    store.transition(&done.id, JobState::Selecting)?;
    store.finish(
        &done.id,
        SelectionResult {
            method: Method::Nqc,
            direction: Method::Nqc.direction(),
            ranked: Vec::new(),
            per_query_diagnostics: None,
        },
    )?;
    println!("{} -> {}", done.id, store.job(&done.id)?.state);

    match store.transition(&done.id, JobState::Encoding) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    // Leave the heavy job mid-flight and reopen, as after a crash.
    store.claim(QueueClass::Heavy)?;
    println!("{} before restart: {}", stuck.id, store.job(&stuck.id)?.state);
    drop(store);

    let store = JobStore::open(dir.path())?;
    println!("recovered: {:?}", store.recovered_jobs());
    println!("{} after restart: {}", stuck.id, store.job(&stuck.id)?.state);

    let log: Vec<JobLogEntry> = dq_service::store::read_log(&dir.path().join(JOBS_LOG))?;
    for entry in &log {
        let op = match entry {
            JobLogEntry::Submit { .. } => "submit",
            JobLogEntry::Update { .. } => "update",
            JobLogEntry::Recover { .. } => "recover",
        };
        println!("  {op:<8} {} {}", entry.job().id, entry.job().state);
    }
    Ok(())
}
