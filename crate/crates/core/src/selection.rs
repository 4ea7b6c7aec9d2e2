//! Runs one selection method over the whole model pool.
//!
//! The two stages of a selection job are exposed separately:
//! [`ensure_embeddings`] encodes the corpus once per model and caches the result
//! as `<collection>/<model_id>.dqv`, and [`run_method`] turns cached embeddings
//! plus encoder/generator clients into a [`SelectionResult`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Query};
use crate::embeddings::{self, EmbeddingError, EmbeddingMatrix};
use crate::fusion::{self, FusionError};
use crate::method::{rank_scores, Direction, Method, MethodScore, SelectionResult};
use crate::models::{
    encode_batched, encode_corpus, leaderboard_rank, ClientError, Clients, EncodeCorpusError, EncodeMode,
    LeaderboardField, ModelRecord, Registry, RegistryError,
};
use crate::perturbation::{self, PerturbationError};
use crate::qpp::{self, QppError, QueryScoreList};
use crate::retrieval::{RetrievalError, Run, SearchIndex};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("method {0} needs a query set")]
    MissingQueries(Method),
    #[error("no embeddings for model {0:?}")]
    MissingEmbeddings(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Qpp(#[from] QppError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl From<EncodeCorpusError> for SelectionError {
    fn from(e: EncodeCorpusError) -> Self {
        match e {
            EncodeCorpusError::Client(c) => SelectionError::Client(c),
            EncodeCorpusError::Embedding(m) => SelectionError::Embedding(m),
        }
    }
}

/// Per-job knobs. Unknown keys are rejected when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    /// Retrieval depth shared by every query-dependent method.
    pub k: usize,
    pub seed: u64,
    /// Documents sampled as pseudo-query sources.
    pub n_docs: usize,
    /// Maximum masked variants per query.
    pub cap: usize,
    pub pseudo_queries_per_doc: usize,
    /// Min-max normalize each query's scores (and its centroid score) before the estimators.
    pub normalize_before_qpp: bool,
    pub rrf_c: f64,
    pub fusion_depth: usize,
    pub alteration_direction: Direction,
    pub batch_size: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            k: 100,
            seed: 7,
            n_docs: perturbation::DEFAULT_SAMPLE_DOCS,
            cap: perturbation::DEFAULT_MASK_CAP,
            pseudo_queries_per_doc: 1,
            normalize_before_qpp: false,
            rrf_c: fusion::RRF_C,
            fusion_depth: fusion::PSEUDO_QRELS_DEPTH,
            alteration_direction: Method::QueryAlteration.direction(),
            batch_size: crate::models::DEFAULT_BATCH_SIZE,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |what: &str| Err(SelectionError::InvalidParams(format!("{what} must be positive")));
        if self.k == 0 {
            return bad("k");
        }
        if self.n_docs == 0 {
            return bad("n_docs");
        }
        if self.cap == 0 {
            return bad("cap");
        }
        if self.pseudo_queries_per_doc == 0 {
            return bad("pseudo_queries_per_doc");
        }
        if self.fusion_depth == 0 {
            return bad("fusion_depth");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if !(self.rrf_c.is_finite() && self.rrf_c > 0.0) {
            return bad("rrf_c");
        }
        Ok(())
    }
}

pub struct SelectionInput<'a> {
    pub corpus: &'a [Document],
    pub queries: Option<&'a [Query]>,
    pub registry: &'a Registry,
    pub embeddings: &'a BTreeMap<String, EmbeddingMatrix>,
    pub clients: &'a Clients,
}

/// Whether `<dir>/<model>.dqv` holds a current matrix for `docs`.
pub fn cached_embeddings(dir: &Path, model: &ModelRecord, docs: &[Document]) -> Option<EmbeddingMatrix> {
    let m = embeddings::load_expecting(&embeddings::path_for(dir, &model.model_id), model.dim).ok()?;
    let current = m.len() == docs.len() && m.doc_ids().iter().zip(docs).all(|(id, d)| *id == d.id);
    current.then_some(m)
}

pub fn embeddings_complete(dir: &Path, registry: &Registry, docs: &[Document]) -> bool {
    registry.iter().all(|m| cached_embeddings(dir, m, docs).is_some())
}

/// Loads each model's cached matrix, encoding and persisting the missing ones.
/// `on_model` receives (models done, total models) after each model.
pub fn ensure_embeddings(
    dir: &Path,
    docs: &[Document],
    registry: &Registry,
    clients: &Clients,
    batch_size: usize,
    mut on_model: impl FnMut(usize, usize),
) -> Result<BTreeMap<String, EmbeddingMatrix>, SelectionError> {
    let mut out = BTreeMap::new();
    let total = registry.len();
    for (i, model) in registry.iter().enumerate() {
        let matrix = match cached_embeddings(dir, model, docs) {
            Some(m) => m,
            None => {
                let encoder = clients.encoder_for(model)?;
                let m = encode_corpus(encoder.as_ref(), model, docs, batch_size, |_, _| {})?;
                embeddings::save(&m, &embeddings::path_for(dir, &model.model_id))?;
                m
            }
        };
        out.insert(model.model_id.clone(), matrix);
        on_model(i + 1, total);
    }
    Ok(out)
}

struct ModelContext<'a> {
    record: &'a ModelRecord,
    index: SearchIndex<'a>,
}

fn model_contexts<'a>(input: &'a SelectionInput<'a>) -> Result<Vec<ModelContext<'a>>, SelectionError> {
    input
        .registry
        .iter()
        .map(|record| {
            let matrix = input
                .embeddings
                .get(&record.model_id)
                .ok_or_else(|| SelectionError::MissingEmbeddings(record.model_id.clone()))?;
            Ok(ModelContext {
                record,
                index: SearchIndex::new(matrix, record.sim),
            })
        })
        .collect()
}

fn encode_texts(
    clients: &Clients,
    record: &ModelRecord,
    texts: &[(String, String)],
    batch_size: usize,
) -> Result<BTreeMap<String, Vec<f32>>, SelectionError> {
    let encoder = clients.encoder_for(record)?;
    let strings: Vec<String> = texts.iter().map(|(_, t)| t.clone()).collect();
    let vectors = encode_batched(encoder.as_ref(), record, EncodeMode::Query, &strings, batch_size)?;
    Ok(texts.iter().map(|(id, _)| id.clone()).zip(vectors).collect())
}

type Diagnostics = BTreeMap<String, BTreeMap<String, f64>>;

fn finish(method: Method, direction: Direction, scores: &[MethodScore], diagnostics: Diagnostics) -> SelectionResult {
    let mut result = rank_scores(method, direction, scores);
    result.per_query_diagnostics = Some(diagnostics);
    result
}

/// Computes one method's scores for every model in the registry and ranks them.
pub fn run_method(
    input: &SelectionInput<'_>,
    method: Method,
    params: &SelectionParams,
    mut progress: impl FnMut(usize, usize),
) -> Result<SelectionResult, SelectionError> {
    params.validate()?;
    match method {
        Method::Msmarco | Method::Mteb => {
            let field = if method == Method::Msmarco {
                LeaderboardField::MsmarcoNdcg10
            } else {
                LeaderboardField::MtebAvg
            };
            let result = leaderboard_rank(input.registry, field)?;
            progress(input.registry.len(), input.registry.len());
            return Ok(result);
        }
        Method::Larmor => return larmor(input, params, progress),
        _ => {}
    }

    let queries = input.queries.ok_or(SelectionError::MissingQueries(method))?;
    let query_texts: Vec<(String, String)> = queries.iter().map(|q| (q.id.clone(), q.text.clone())).collect();
    let models = model_contexts(input)?;
    let total = models.len();

    match method {
        Method::Fusion => {
            let mut runs = Vec::with_capacity(total);
            for (i, m) in models.iter().enumerate() {
                let vectors = encode_texts(input.clients, m.record, &query_texts, params.batch_size)?;
                runs.push(m.index.batch_search(&vectors, params.k)?);
                progress(i + 1, total);
            }
            let fused = fusion::rrf_fuse(&runs, params.rrf_c)?;
            let pseudo = fusion::pseudo_qrels_from_fused(&fused, params.fusion_depth);
            let mut diagnostics = Diagnostics::new();
            let scores: Vec<MethodScore> = runs
                .iter()
                .map(|run| {
                    diagnostics.insert(
                        run.model_id.clone(),
                        fusion::per_query_ndcg(run, &pseudo, fusion::NDCG_CUTOFF),
                    );
                    fusion::fusion_method_score(run, &pseudo)
                })
                .collect();
            Ok(finish(method, Direction::HigherIsBetter, &scores, diagnostics))
        }
        Method::QueryAlteration => {
            let variants: Vec<(String, Vec<String>)> = queries
                .iter()
                .map(|q| {
                    let texts = perturbation::mask_variants(q, params.cap, params.seed)
                        .into_iter()
                        .map(|v| v.text)
                        .collect();
                    (q.id.clone(), texts)
                })
                .collect();
            let mut scores = Vec::with_capacity(total);
            let mut diagnostics = Diagnostics::new();
            for (i, m) in models.iter().enumerate() {
                let (value, per_query) = alteration_for_model(input, m, &query_texts, &variants, params)?;
                scores.push(value);
                diagnostics.insert(m.record.model_id.clone(), per_query);
                progress(i + 1, total);
            }
            Ok(finish(method, params.alteration_direction, &scores, diagnostics))
        }
        _ => {
            let estimator = qpp::estimator(method).expect("score-distribution method");
            let mut scores = Vec::with_capacity(total);
            let mut diagnostics = Diagnostics::new();
            for (i, m) in models.iter().enumerate() {
                let vectors = encode_texts(input.clients, m.record, &query_texts, params.batch_size)?;
                let run = m.index.batch_search(&vectors, params.k)?;
                let centroid = qpp::corpus_centroid(m.index.matrix());
                let mut per_query = BTreeMap::new();
                for (qid, entries) in &run.queries {
                    let mu = qpp::centroid_score(&centroid, &vectors[qid], m.record.sim)?;
                    let mut list = QueryScoreList::new(qid.clone(), entries.iter().map(|e| e.score).collect(), mu)?;
                    if params.normalize_before_qpp {
                        list = list.minmax_normalized();
                    }
                    per_query.insert(qid.clone(), estimator(&list));
                }
                let values: Vec<f64> = per_query.values().copied().collect();
                scores.push(qpp::aggregate(&values, method, &m.record.model_id)?);
                diagnostics.insert(m.record.model_id.clone(), per_query);
                progress(i + 1, total);
            }
            Ok(finish(method, method.direction(), &scores, diagnostics))
        }
    }
}

fn alteration_for_model(
    input: &SelectionInput<'_>,
    m: &ModelContext<'_>,
    query_texts: &[(String, String)],
    variants: &[(String, Vec<String>)],
    params: &SelectionParams,
) -> Result<(MethodScore, BTreeMap<String, f64>), SelectionError> {
    let vectors = encode_texts(input.clients, m.record, query_texts, params.batch_size)?;
    let run = m.index.batch_search(&vectors, params.k)?;

    let flat: Vec<(String, String)> = variants
        .iter()
        .flat_map(|(qid, texts)| {
            texts
                .iter()
                .enumerate()
                .map(move |(j, t)| (format!("{qid}\u{1f}{j}"), t.clone()))
        })
        .collect();
    let variant_vectors = encode_texts(input.clients, m.record, &flat, params.batch_size)?;

    let rows: HashMap<&str, usize> = m.index.matrix().index_by_id();
    let mut per_query = BTreeMap::new();
    let mut values = Vec::with_capacity(variants.len());
    for (qid, texts) in variants {
        let top = run.get(qid).unwrap_or_default();
        let variant_scores: Vec<Vec<f64>> = (0..texts.len())
            .map(|j| {
                let v = &variant_vectors[&format!("{qid}\u{1f}{j}")];
                let vn = crate::retrieval::norm(v);
                top.iter()
                    .map(|e| m.index.score_row(v, vn, rows[e.doc_id.as_str()]))
                    .collect()
            })
            .collect();
        let value = perturbation::alteration_query_value(top, &variant_scores)?;
        if let Some(v) = value {
            per_query.insert(qid.clone(), v);
        }
        values.push(value);
    }
    let score = perturbation::alteration_score(&m.record.model_id, &values, params.alteration_direction)?;
    Ok((score, per_query))
}

fn larmor(
    input: &SelectionInput<'_>,
    params: &SelectionParams,
    mut progress: impl FnMut(usize, usize),
) -> Result<SelectionResult, SelectionError> {
    let sources = perturbation::sample_docs(input.corpus, params.n_docs, params.seed);
    let pseudo =
        perturbation::build_pseudo_queries(input.clients.generator(), &sources, params.pseudo_queries_per_doc)?;
    if pseudo.is_empty() {
        return Err(PerturbationError::NoPseudoQueries.into());
    }
    let texts: Vec<(String, String)> = pseudo.iter().map(|p| (p.id.clone(), p.text.clone())).collect();
    let models = model_contexts(input)?;
    let total = models.len();
    let depth = params.k.max(fusion::NDCG_CUTOFF);
    let mut scores = Vec::with_capacity(total);
    let mut diagnostics = Diagnostics::new();
    for (i, m) in models.iter().enumerate() {
        let vectors = encode_texts(input.clients, m.record, &texts, params.batch_size)?;
        let run: Run = m.index.batch_search(&vectors, depth)?;
        scores.push(perturbation::larmor_score(&m.record.model_id, &pseudo, &run)?);
        diagnostics.insert(
            m.record.model_id.clone(),
            perturbation::larmor_per_query(&pseudo, &run).into_iter().collect(),
        );
        progress(i + 1, total);
    }
    Ok(finish(Method::Larmor, Direction::HigherIsBetter, &scores, diagnostics))
}
