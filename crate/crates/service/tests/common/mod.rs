#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use dq_core::corpus::{Collection, Qrels, CORPUS_FILE, QRELS_FILE, QUERIES_FILE};
use dq_core::models::{ClientError, EncodeMode, Encoder, ModelRecord, Registry, StubEncoder};
use dq_core::{Document, Query, Similarity};
use dq_service::encoder_server::{self, EncoderState};
use dq_service::RunningServer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Random word collection with one judged document per query.
pub fn word_collection(n_docs: usize, n_queries: usize, seed: u64) -> Collection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Document> = (0..n_docs)
        .map(|i| {
            let words: Vec<String> = (0..12).map(|_| format!("w{}", rng.gen_range(0..300))).collect();
            Document::new(format!("d{i:04}"), "", words.join(" "))
        })
        .collect();
    let mut qrels = Qrels::new();
    let queries = (0..n_queries)
        .map(|j| {
            let target = &corpus[rng.gen_range(0..n_docs)];
            let words: Vec<&str> = target.text.split_whitespace().take(4).collect();
            qrels.insert(format!("q{j:03}"), target.id.clone(), 1);
            Query::new(format!("q{j:03}"), words.join(" "))
        })
        .collect();
    Collection {
        corpus,
        queries: Some(queries),
        qrels: Some(qrels),
    }
}

pub fn small_registry() -> Registry {
    Registry::new([
        ModelRecord::stub("m-small", 16, Similarity::Cosine),
        ModelRecord::stub("m-mid", 32, Similarity::Dot),
        ModelRecord::stub("m-wide", 48, Similarity::Cosine),
    ])
    .unwrap()
}

pub fn collection_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    [CORPUS_FILE, QUERIES_FILE, QRELS_FILE]
        .into_iter()
        .filter(|f| dir.join(f).exists())
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

pub fn multipart_body(files: &[(String, Vec<u8>)]) -> (String, Vec<u8>) {
    let boundary = "dq-test-boundary-7f3a";
    let mut body = Vec::new();
    for (name, bytes) in files {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\
                 Content-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

pub struct Reply {
    pub status: u16,
    pub content_type: String,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }
}

fn finish(result: Result<ureq::Response, ureq::Error>) -> Reply {
    let response = match result {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("transport error: {e}"),
    };
    let status = response.status();
    let content_type = response.header("content-type").unwrap_or_default().to_string();
    let mut bytes = Vec::new();
    std::io::Read::read_to_end(&mut response.into_reader(), &mut bytes).unwrap();
    Reply {
        status,
        content_type,
        bytes,
    }
}

fn with_token(req: ureq::Request, token: Option<&str>) -> ureq::Request {
    match token {
        Some(t) => req.set("Authorization", &format!("Bearer {t}")),
        None => req,
    }
}

pub fn get(url: &str) -> Reply {
    finish(ureq::get(url).call())
}

pub fn post_json(url: &str, body: &Value, token: Option<&str>) -> Reply {
    finish(with_token(ureq::post(url), token).send_json(body.clone()))
}

pub fn upload(base: &str, files: &[(String, Vec<u8>)], token: Option<&str>) -> Reply {
    let (content_type, body) = multipart_body(files);
    finish(
        with_token(ureq::post(&format!("{base}/api/collections")), token)
            .set("Content-Type", &content_type)
            .send_bytes(&body),
    )
}

pub fn upload_collection(base: &str, collection: &Collection) -> String {
    let dir = tempfile::tempdir().unwrap();
    collection.save_dir(dir.path()).unwrap();
    let reply = upload(base, &collection_files(dir.path()), None);
    assert_eq!(reply.status, 201, "{}", String::from_utf8_lossy(&reply.bytes));
    reply.json()["collection_id"].as_str().unwrap().to_string()
}

pub fn submit(base: &str, collection_id: &str, method: &str, params: Value) -> Value {
    let reply = post_json(
        &format!("{base}/api/jobs"),
        &serde_json::json!({"collection_id": collection_id, "method": method, "params": params}),
        None,
    );
    assert_eq!(reply.status, 201, "{}", String::from_utf8_lossy(&reply.bytes));
    reply.json()
}

/// Polls `GET /api/jobs/{id}` until `done` holds for the job.
pub fn wait_job(base: &str, id: &str, timeout: Duration, done: impl Fn(&Value) -> bool) -> Value {
    let deadline = Instant::now() + timeout;
    loop {
        let job = get(&format!("{base}/api/jobs/{id}")).json();
        if done(&job) {
            return job;
        }
        assert!(Instant::now() < deadline, "timed out waiting on {id}: {job}");
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn wait_terminal(base: &str, id: &str) -> Value {
    wait_job(base, id, Duration::from_secs(120), |j| {
        matches!(j["state"].as_str(), Some("FINISHED") | Some("FAILED"))
    })
}

/// Stub encoder that blocks every call until the gate is opened.
#[derive(Default)]
pub struct GatedEncoder {
    state: Mutex<(bool, usize)>,
    changed: Condvar,
}

impl GatedEncoder {
    pub fn open(&self) {
        self.state.lock().unwrap().0 = true;
        self.changed.notify_all();
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().1
    }

    pub fn wait_for_call(&self, timeout: Duration) -> bool {
        let guard = self.state.lock().unwrap();
        let (guard, _) = self.changed.wait_timeout_while(guard, timeout, |s| s.1 == 0).unwrap();
        guard.1 > 0
    }
}

impl Encoder for GatedEncoder {
    fn encode(&self, model: &ModelRecord, mode: EncodeMode, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let mut guard = self.state.lock().unwrap();
        guard.1 += 1;
        self.changed.notify_all();
        let _guard = self.changed.wait_while(guard, |s| !s.0).unwrap();
        StubEncoder.encode(model, mode, texts)
    }
}

pub fn spawn_encoder_server(registry: Registry, encoder: Arc<dyn Encoder>) -> RunningServer {
    let state = EncoderState {
        encoder,
        ..EncoderState::stub(registry)
    };
    dq_service::spawn(encoder_server::router(state), "127.0.0.1:0".parse().unwrap()).unwrap()
}

/// A `dq serve` child process.
pub struct DqServe {
    pub child: Child,
    pub url: String,
}

impl DqServe {
    pub fn start(config: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_dq"))
            .args(["serve", "--config"])
            .arg(config)
            .args(["--bind", "127.0.0.1:0"])
            .env("DQ_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawning dq serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Self { child, url }
    }

    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for DqServe {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
