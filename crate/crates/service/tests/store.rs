use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Barrier};

use chrono::Utc;
use dq_core::method::QueueClass;
use dq_core::{Method, SelectionParams, SelectionResult};
use dq_service::store::{read_log, CollectionRecord, JobLogEntry, JobStore, StoreError, JOBS_LOG};
use dq_service::JobState;
use proptest::prelude::*;

fn collection(id: &str) -> CollectionRecord {
    CollectionRecord {
        id: id.into(),
        name: id.into(),
        created_at: Utc::now(),
        documents: 3,
        queries: 1,
        has_qrels: false,
    }
}

fn empty_result(method: Method) -> SelectionResult {
    SelectionResult {
        method,
        direction: method.direction(),
        ranked: Vec::new(),
        per_query_diagnostics: None,
    }
}

#[test]
fn two_workers_racing_never_double_claim() {
    let mut double = 0;
    let mut lost = 0;
    for _ in 0..1000 {
        let store = Arc::new(JobStore::ephemeral());
        store.add_collection(collection("c")).unwrap();
        store
            .submit("c", Method::Fusion, SelectionParams::default(), QueueClass::Light)
            .unwrap();
        let barrier = Arc::new(Barrier::new(2));
        let handles: Vec<_> = (0..2)
            .map(|_| {
                let (store, barrier) = (store.clone(), barrier.clone());
                std::thread::spawn(move || {
                    barrier.wait();
                    store.claim(QueueClass::Light).unwrap().is_some()
                })
            })
            .collect();
        let claims = handles.into_iter().map(|h| h.join().unwrap()).filter(|c| *c).count();
        double += usize::from(claims > 1);
        lost += usize::from(claims == 0);
    }
    assert_eq!((double, lost), (0, 0));
}

#[test]
fn many_workers_claim_each_job_once() {
    let store = Arc::new(JobStore::ephemeral());
    store.add_collection(collection("c")).unwrap();
    let submitted: BTreeSet<String> = (0..200)
        .map(|_| {
            store
                .submit("c", Method::Nqc, SelectionParams::default(), QueueClass::Light)
                .unwrap()
                .id
        })
        .collect();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let store = store.clone();
            std::thread::spawn(move || {
                let mut mine = Vec::new();
                while let Some(job) = store.claim(QueueClass::Light).unwrap() {
                    mine.push(job.id);
                }
                mine
            })
        })
        .collect();
    let claimed: Vec<String> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    assert_eq!(claimed.len(), 200);
    assert_eq!(claimed.into_iter().collect::<BTreeSet<_>>(), submitted);
}

#[test]
fn claim_wait_wakes_on_submit_and_on_close() {
    let store = Arc::new(JobStore::ephemeral());
    store.add_collection(collection("c")).unwrap();
    let waiter = {
        let store = store.clone();
        std::thread::spawn(move || store.claim_wait(QueueClass::Heavy, None).unwrap())
    };
    std::thread::sleep(std::time::Duration::from_millis(50));
    let job = store
        .submit("c", Method::Larmor, SelectionParams::default(), QueueClass::Heavy)
        .unwrap();
    assert_eq!(waiter.join().unwrap().unwrap().id, job.id);

    let waiter = {
        let store = store.clone();
        std::thread::spawn(move || store.claim_wait(QueueClass::Heavy, None).unwrap())
    };
    std::thread::sleep(std::time::Duration::from_millis(50));
    store.close();
    assert!(waiter.join().unwrap().is_none());
}

#[test]
fn listing_is_ordered_by_creation_then_id() {
    let store = JobStore::ephemeral();
    store.add_collection(collection("c")).unwrap();
    for _ in 0..30 {
        store
            .submit("c", Method::Wig, SelectionParams::default(), QueueClass::Light)
            .unwrap();
    }
    let jobs = store.jobs();
    assert!(jobs
        .windows(2)
        .all(|w| (w[0].created_at, &w[0].id) < (w[1].created_at, &w[1].id)));
    assert!(jobs.iter().all(|j| j.state == JobState::Pending));
}

#[test]
fn failure_message_is_preserved_and_result_absent() {
    let store = JobStore::ephemeral();
    store.add_collection(collection("c")).unwrap();
    let job = store
        .submit("c", Method::Fusion, SelectionParams::default(), QueueClass::Heavy)
        .unwrap();
    store.claim(QueueClass::Heavy).unwrap();
    let failed = store.fail(&job.id, "EndpointUnreachable(http://x)").unwrap();
    assert_eq!(failed.state, JobState::Failed);
    assert_eq!(failed.error.as_deref(), Some("EndpointUnreachable(http://x)"));
    assert!(matches!(store.result(&job.id), Err(StoreError::ResultNotFound(_))));
    assert!(matches!(
        store.fail(&job.id, "again"),
        Err(StoreError::IllegalTransition { .. })
    ));
}

#[derive(Debug, Clone)]
enum Op {
    Submit(bool),
    Claim(bool),
    Transition(usize, usize),
    Progress(usize, u8),
    Fail(usize),
    Finish(usize),
    Reopen,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => any::<bool>().prop_map(Op::Submit),
        3 => any::<bool>().prop_map(Op::Claim),
        4 => (0..16usize, 0..5usize).prop_map(|(j, s)| Op::Transition(j, s)),
        2 => (0..16usize, any::<u8>()).prop_map(|(j, p)| Op::Progress(j, p)),
        2 => (0..16usize).prop_map(Op::Fail),
        2 => (0..16usize).prop_map(Op::Finish),
        1 => Just(Op::Reopen),
    ]
}

fn class(heavy: bool) -> QueueClass {
    if heavy {
        QueueClass::Heavy
    } else {
        QueueClass::Light
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_walks_only_follow_allowed_edges(ops in proptest::collection::vec(op(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = JobStore::open(dir.path()).unwrap();
        store.add_collection(collection("c")).unwrap();
        let mut ids: Vec<String> = Vec::new();
        let mut expected: BTreeMap<String, JobState> = BTreeMap::new();

        for op in ops {
            match op {
                Op::Submit(heavy) => {
                    let job = store.submit("c", Method::Nqc, SelectionParams::default(), class(heavy)).unwrap();
                    prop_assert_eq!(job.state, JobState::Pending);
                    expected.insert(job.id.clone(), JobState::Pending);
                    ids.push(job.id);
                }
                Op::Claim(heavy) => {
                    if let Some(job) = store.claim(class(heavy)).unwrap() {
                        prop_assert_eq!(expected[&job.id], JobState::Pending);
                        prop_assert_eq!(job.queue_class, class(heavy));
                        prop_assert_eq!(job.stage.as_deref(), Some("Dataset Encoding"));
                        expected.insert(job.id, JobState::Encoding);
                    }
                }
                Op::Transition(j, s) if !ids.is_empty() => {
                    let id = &ids[j % ids.len()];
                    let next = JobState::ALL[s];
                    let before = expected[id];
                    match store.transition(id, next) {
                        Ok(job) => {
                            prop_assert!(before.can_advance_to(next));
                            prop_assert_eq!(job.state, next);
                            expected.insert(id.clone(), next);
                        }
                        Err(StoreError::IllegalTransition { from, to, .. }) => {
                            prop_assert!(!before.can_advance_to(next));
                            prop_assert_eq!((from, to), (before, next));
                        }
                        Err(e) => prop_assert!(false, "unexpected {e}"),
                    }
                }
                Op::Progress(j, p) if !ids.is_empty() => {
                    let id = &ids[j % ids.len()];
                    let job = store.set_progress(id, f64::from(p)).unwrap();
                    prop_assert_eq!(job.state, expected[id]);
                    prop_assert!((0.0..=100.0).contains(&job.progress_percent));
                }
                Op::Fail(j) if !ids.is_empty() => {
                    let id = &ids[j % ids.len()];
                    let ok = store.fail(id, "boom").is_ok();
                    prop_assert_eq!(ok, !expected[id].is_terminal());
                    if ok {
                        expected.insert(id.clone(), JobState::Failed);
                    }
                }
                Op::Finish(j) if !ids.is_empty() => {
                    let id = &ids[j % ids.len()];
                    let ok = store.finish(id, empty_result(Method::Nqc)).is_ok();
                    prop_assert_eq!(ok, expected[id] == JobState::Selecting);
                    if ok {
                        expected.insert(id.clone(), JobState::Finished);
                        prop_assert!(store.result(id).is_ok());
                    }
                }
                Op::Reopen => {
                    drop(store);
                    store = JobStore::open(dir.path()).unwrap();
                    for (id, state) in expected.iter_mut() {
                        if state.is_active() {
                            *state = JobState::Pending;
                        }
                        prop_assert_eq!(store.job(id).unwrap().state, *state);
                    }
                    prop_assert!(store.jobs().iter().all(|j| !j.state.is_active()));
                }
                _ => {}
            }
        }

        // The on-disk trace of every job only uses allowed edges, plus recovery back to PENDING.
        let entries: Vec<JobLogEntry> = read_log(&dir.path().join(JOBS_LOG)).unwrap();
        let mut last: BTreeMap<String, (JobState, chrono::DateTime<Utc>)> = BTreeMap::new();
        for entry in &entries {
            let job = entry.job();
            match (entry, last.get(&job.id)) {
                (JobLogEntry::Submit { .. }, None) => prop_assert_eq!(job.state, JobState::Pending),
                (JobLogEntry::Update { .. }, Some(&(prev, at))) => {
                    prop_assert!(prev == job.state || prev.can_advance_to(job.state), "{prev} -> {}", job.state);
                    prop_assert!(job.updated_at >= at);
                }
                (JobLogEntry::Recover { from, .. }, Some(&(prev, at))) => {
                    prop_assert!(prev.is_active() && *from == prev && job.state == JobState::Pending);
                    prop_assert!(job.updated_at >= at);
                }
                (e, p) => prop_assert!(false, "unexpected record {e:?} after {p:?}"),
            }
            last.insert(job.id.clone(), (job.state, job.updated_at));
        }
        for (id, state) in &expected {
            prop_assert_eq!(last[id].0, *state);
        }
    }
}
