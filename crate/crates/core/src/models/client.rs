use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use thiserror::Error;

use crate::corpus::Document;
use crate::embeddings::{EmbeddingError, EmbeddingMatrix};

use super::protocol::{EncodeMode, EncodeRequest, EncodeResponse, GenerateRequest, GenerateResponse};
use super::registry::{ModelRecord, STUB_ENDPOINT};
use super::stub::{StubEncoder, StubGenerator};

pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("EndpointUnreachable({0})")]
    EndpointUnreachable(String),
    #[error("DimMismatch(expected {expected}, found {found})")]
    DimMismatch { expected: usize, found: usize },
    #[error("PartialResponse(expected {expected} items, found {found})")]
    PartialResponse { expected: usize, found: usize },
    #[error("NonFiniteVector")]
    NonFiniteVector,
    #[error("EmptyGeneration")]
    EmptyGeneration,
    #[error("InvalidResponse({0})")]
    InvalidResponse(String),
    #[error("UnknownEndpoint({0})")]
    UnknownEndpoint(String),
}

/// The `encode_queries` / `encode_corpus` contract of a dense retriever.
///
/// Implementations must be batch invariant: encoding a concatenated batch gives
/// the concatenation of encoding each item alone.
pub trait Encoder: Send + Sync {
    fn encode(&self, model: &ModelRecord, mode: EncodeMode, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError>;
}

/// Produces pseudo-queries for a document.
pub trait Generator: Send + Sync {
    fn generate(&self, doc: &Document, n: usize) -> Result<Vec<String>, ClientError>;
}

/// Encodes through `client` and checks the response shape against the record.
pub fn encode(
    client: &dyn Encoder,
    model: &ModelRecord,
    mode: EncodeMode,
    texts: &[String],
) -> Result<Vec<Vec<f32>>, ClientError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = client.encode(model, mode, texts)?;
    if vectors.len() != texts.len() {
        return Err(ClientError::PartialResponse {
            expected: texts.len(),
            found: vectors.len(),
        });
    }
    for v in &vectors {
        if v.len() != model.dim {
            return Err(ClientError::DimMismatch {
                expected: model.dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ClientError::NonFiniteVector);
        }
    }
    Ok(vectors)
}

/// [`encode`] in batches of `batch_size`.
pub fn encode_batched(
    client: &dyn Encoder,
    model: &ModelRecord,
    mode: EncodeMode,
    texts: &[String],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>, ClientError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        out.extend(encode(client, model, mode, chunk)?);
    }
    Ok(out)
}

pub fn generate_queries(client: &dyn Generator, doc: &Document, n: usize) -> Result<Vec<String>, ClientError> {
    let queries = client.generate(doc, n)?;
    if queries.is_empty() || queries.iter().any(|q| q.trim().is_empty()) {
        return Err(ClientError::EmptyGeneration);
    }
    if queries.len() != n {
        return Err(ClientError::PartialResponse {
            expected: n,
            found: queries.len(),
        });
    }
    Ok(queries)
}

#[derive(Debug, Error)]
pub enum EncodeCorpusError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Runs every document through a model and assembles its embedding matrix.
pub fn encode_corpus(
    client: &dyn Encoder,
    model: &ModelRecord,
    docs: &[Document],
    batch_size: usize,
    mut on_batch: impl FnMut(usize, usize),
) -> Result<EmbeddingMatrix, EncodeCorpusError> {
    let mut vectors = Vec::with_capacity(docs.len() * model.dim);
    let mut done = 0;
    for chunk in docs.chunks(batch_size.max(1)) {
        let texts: Vec<String> = chunk.iter().map(Document::encoder_input).collect();
        for v in encode(client, model, EncodeMode::Document, &texts)? {
            vectors.extend_from_slice(&v);
        }
        done += chunk.len();
        on_batch(done, docs.len());
    }
    Ok(EmbeddingMatrix::new(
        model.model_id.clone(),
        model.dim,
        docs.iter().map(|d| d.id.clone()).collect(),
        vectors,
    )?)
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout_connect(Duration::from_secs(5))
        .timeout(Duration::from_secs(300))
        .build()
}

fn post<Req: serde::Serialize, Resp: for<'de> serde::Deserialize<'de>>(
    agent: &ureq::Agent,
    url: &str,
    body: &Req,
) -> Result<Resp, ClientError> {
    match agent.post(url).send_json(body) {
        Ok(resp) => resp
            .into_json()
            .map_err(|e| ClientError::InvalidResponse(format!("{url}: {e}"))),
        Err(ureq::Error::Status(code, resp)) => {
            let body = resp.into_string().unwrap_or_default();
            Err(ClientError::InvalidResponse(format!("{url}: status {code}: {body}")))
        }
        Err(e) => Err(ClientError::EndpointUnreachable(format!("{url}: {e}"))),
    }
}

/// Encoder behind `POST {base}/encode`.
pub struct HttpEncoder {
    url: String,
    agent: ureq::Agent,
}

impl HttpEncoder {
    pub fn new(base_url: &str) -> Self {
        Self {
            url: format!("{}/encode", base_url.trim_end_matches('/')),
            agent: agent(),
        }
    }
}

impl Encoder for HttpEncoder {
    fn encode(&self, model: &ModelRecord, mode: EncodeMode, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let resp: EncodeResponse = post(
            &self.agent,
            &self.url,
            &EncodeRequest {
                model_id: model.model_id.clone(),
                mode,
                texts: texts.to_vec(),
            },
        )?;
        Ok(resp.vectors)
    }
}

/// Generator behind `POST {base}/generate`.
pub struct HttpGenerator {
    url: String,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(base_url: &str) -> Self {
        Self {
            url: format!("{}/generate", base_url.trim_end_matches('/')),
            agent: agent(),
        }
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, doc: &Document, n: usize) -> Result<Vec<String>, ClientError> {
        let resp: GenerateResponse = post(&self.agent, &self.url, &GenerateRequest { doc: doc.clone(), n })?;
        Ok(resp.queries)
    }
}

fn is_http(endpoint: &str) -> bool {
    endpoint.starts_with("http://") || endpoint.starts_with("https://")
}

/// Resolves registry endpoints to encoder implementations.
///
/// `"stub"` maps to [`StubEncoder`], `http(s)://` URLs to [`HttpEncoder`], and
/// any other value must have been registered with [`Clients::register_encoder`].
pub struct Clients {
    named: HashMap<String, Arc<dyn Encoder>>,
    http: RwLock<HashMap<String, Arc<dyn Encoder>>>,
    generator: Arc<dyn Generator>,
}

impl Default for Clients {
    fn default() -> Self {
        Self::new()
    }
}

impl Clients {
    pub fn new() -> Self {
        let mut named: HashMap<String, Arc<dyn Encoder>> = HashMap::new();
        named.insert(STUB_ENDPOINT.to_string(), Arc::new(StubEncoder));
        Self {
            named,
            http: RwLock::new(HashMap::new()),
            generator: Arc::new(StubGenerator),
        }
    }

    pub fn register_encoder(mut self, name: impl Into<String>, encoder: Arc<dyn Encoder>) -> Self {
        self.named.insert(name.into(), encoder);
        self
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    /// `"stub"` or an `http(s)://` base URL.
    pub fn with_generator_endpoint(self, endpoint: &str) -> Result<Self, ClientError> {
        if endpoint == STUB_ENDPOINT {
            Ok(self.with_generator(Arc::new(StubGenerator)))
        } else if is_http(endpoint) {
            Ok(self.with_generator(Arc::new(HttpGenerator::new(endpoint))))
        } else {
            Err(ClientError::UnknownEndpoint(endpoint.to_string()))
        }
    }

    pub fn encoder_for(&self, model: &ModelRecord) -> Result<Arc<dyn Encoder>, ClientError> {
        let endpoint = model.encoder_endpoint.as_str();
        if let Some(e) = self.named.get(endpoint) {
            return Ok(e.clone());
        }
        if !is_http(endpoint) {
            return Err(ClientError::UnknownEndpoint(endpoint.to_string()));
        }
        if let Some(e) = self.http.read().unwrap().get(endpoint) {
            return Ok(e.clone());
        }
        let mut cache = self.http.write().unwrap();
        Ok(cache
            .entry(endpoint.to_string())
            .or_insert_with(|| Arc::new(HttpEncoder::new(endpoint)))
            .clone())
    }

    pub fn generator(&self) -> &dyn Generator {
        self.generator.as_ref()
    }
}
