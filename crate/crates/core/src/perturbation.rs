//! The two encoder-bound methods: query alteration and pseudo-query evaluation.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Qrels, Query};
use crate::fusion::{ndcg_at_k, NDCG_CUTOFF};
use crate::method::{Direction, Method, MethodScore};
use crate::models::{fnv1a64, generate_queries, ClientError, Generator};
use crate::qpp::{population_std, NORMALIZER_EPS};
use crate::retrieval::{Run, RunEntry};

pub const DEFAULT_MASK_CAP: usize = 16;
pub const DEFAULT_SAMPLE_DOCS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error("no query has more than one term")]
    NoUsableQueries,
    #[error("no pseudo-queries")]
    NoPseudoQueries,
    #[error("variant score matrix does not match the retrieved list")]
    ShapeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVariant {
    pub parent_query_id: String,
    pub dropped_term_index: usize,
    pub text: String,
}

fn rng_for(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(key.as_bytes()))
}

/// One variant per dropped whitespace token. Queries with more than `cap`
/// tokens get `cap` variants at seeded, uniformly sampled positions.
pub fn mask_variants(query: &Query, cap: usize, seed: u64) -> Vec<QueryVariant> {
    let tokens: Vec<&str> = query.text.split_whitespace().collect();
    if tokens.len() < 2 {
        return Vec::new();
    }
    let positions: Vec<usize> = if tokens.len() > cap {
        let mut picked = index::sample(&mut rng_for(seed, &query.id), tokens.len(), cap).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..tokens.len()).collect()
    };
    positions
        .into_iter()
        .map(|drop| QueryVariant {
            parent_query_id: query.id.clone(),
            dropped_term_index: drop,
            text: tokens
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, t)| *t)
                .collect::<Vec<_>>()
                .join(" "),
        })
        .collect()
}

/// Score variability of one query's retrieved documents under term masking.
///
/// `variant_scores[j][i]` is the similarity of variant `j` to the `i`-th entry of
/// `run_topk`. Returns `None` when the query has no variants.
pub fn alteration_query_value(
    run_topk: &[RunEntry],
    variant_scores: &[Vec<f64>],
) -> Result<Option<f64>, PerturbationError> {
    if variant_scores.is_empty() || run_topk.is_empty() {
        return Ok(None);
    }
    if variant_scores.iter().any(|row| row.len() != run_topk.len()) {
        return Err(PerturbationError::ShapeMismatch);
    }
    let per_doc_std: Vec<f64> = (0..run_topk.len())
        .map(|i| population_std(&variant_scores.iter().map(|row| row[i]).collect::<Vec<_>>()))
        .collect();
    let mean_std = per_doc_std.iter().sum::<f64>() / per_doc_std.len() as f64;
    let original_mean = run_topk.iter().map(|e| e.score).sum::<f64>() / run_topk.len() as f64;
    Ok(Some(mean_std / original_mean.abs().max(NORMALIZER_EPS)))
}

/// Mean over the queries that produced a value.
pub fn alteration_score(
    model_id: &str,
    per_query: &[Option<f64>],
    direction: Direction,
) -> Result<MethodScore, PerturbationError> {
    let usable: Vec<f64> = per_query.iter().flatten().copied().collect();
    if usable.is_empty() {
        return Err(PerturbationError::NoUsableQueries);
    }
    Ok(MethodScore {
        model_id: model_id.to_string(),
        method: Method::QueryAlteration,
        value: usable.iter().sum::<f64>() / usable.len() as f64,
        direction,
    })
}

/// Seeded uniform sample without replacement, in sampled order.
pub fn sample_docs(corpus: &[Document], n: usize, seed: u64) -> Vec<&Document> {
    let n = n.min(corpus.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, corpus.len(), n)
        .into_iter()
        .map(|i| &corpus[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoQuery {
    pub id: String,
    pub source_doc_id: String,
    pub text: String,
}

pub fn pseudo_query_id(doc_id: &str, i: usize) -> String {
    format!("pq-{doc_id}-{i}")
}

/// Generates `per_doc` queries for each document, keyed back to their source.
pub fn build_pseudo_queries(
    generator: &dyn Generator,
    docs: &[&Document],
    per_doc: usize,
) -> Result<Vec<PseudoQuery>, ClientError> {
    let generated: Vec<Vec<PseudoQuery>> = docs
        .par_iter()
        .map(|doc| {
            let texts = generate_queries(generator, doc, per_doc)?;
            Ok(texts
                .into_iter()
                .enumerate()
                .map(|(i, text)| PseudoQuery {
                    id: pseudo_query_id(&doc.id, i + 1),
                    source_doc_id: doc.id.clone(),
                    text,
                })
                .collect())
        })
        .collect::<Result<_, ClientError>>()?;
    Ok(generated.into_iter().flatten().collect())
}

/// `{pseudo-query -> {source doc: 1}}`.
pub fn pseudo_qrels(pseudo_queries: &[PseudoQuery]) -> Qrels {
    let mut qrels = Qrels::new();
    for pq in pseudo_queries {
        qrels.insert(pq.id.clone(), pq.source_doc_id.clone(), 1);
    }
    qrels
}

/// Per pseudo-query nDCG@10 with the source document as the single relevant item.
pub fn larmor_per_query(pseudo_queries: &[PseudoQuery], run: &Run) -> Vec<(String, f64)> {
    let qrels = pseudo_qrels(pseudo_queries);
    pseudo_queries
        .iter()
        .map(|pq| {
            (
                pq.id.clone(),
                ndcg_at_k(&run.ranked_ids(&pq.id), qrels.get(&pq.id), NDCG_CUTOFF),
            )
        })
        .collect()
}

pub fn larmor_score(
    model_id: &str,
    pseudo_queries: &[PseudoQuery],
    run: &Run,
) -> Result<MethodScore, PerturbationError> {
    if pseudo_queries.is_empty() {
        return Err(PerturbationError::NoPseudoQueries);
    }
    let values = larmor_per_query(pseudo_queries, run);
    Ok(MethodScore {
        model_id: model_id.to_string(),
        method: Method::Larmor,
        value: values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64,
        direction: Direction::HigherIsBetter,
    })
}
