//! Exact top-k search over an [`EmbeddingMatrix`] and TREC run files.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("query has dimension {found}, matrix has {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("query vector has a non-finite component")]
    NonFiniteQuery,
    #[error("k must be positive")]
    ZeroK,
    #[error("query {query_id}: {source}")]
    InQuery {
        query_id: String,
        #[source]
        source: Box<RetrievalError>,
    },
    #[error("malformed run row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Dot,
    Cosine,
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Dot => "dot",
            Similarity::Cosine => "cosine",
        })
    }
}

impl FromStr for Similarity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            other => Err(format!("unknown similarity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: u32,
}

/// Per-query ranked lists produced by one model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub model_id: String,
    pub queries: BTreeMap<String, Vec<RunEntry>>,
}

impl Run {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            queries: BTreeMap::new(),
        }
    }

    pub fn get(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.queries.get(query_id).map(Vec::as_slice)
    }

    pub fn ranked_ids(&self, query_id: &str) -> Vec<&str> {
        self.get(query_id)
            .map(|e| e.iter().map(|x| x.doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn scores(&self, query_id: &str) -> Vec<f64> {
        self.get(query_id)
            .map(|e| e.iter().map(|x| x.score).collect())
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Descending score, then ascending doc id.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; a zero-norm operand scores 0.0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

pub fn similarity(sim: Similarity, a: &[f32], b: &[f32]) -> f64 {
    match sim {
        Similarity::Dot => dot(a, b),
        Similarity::Cosine => cosine(a, b),
    }
}

/// A read-only view over a matrix with cached row norms for cosine scoring.
pub struct SearchIndex<'a> {
    matrix: &'a EmbeddingMatrix,
    sim: Similarity,
    norms: Vec<f64>,
}

impl<'a> SearchIndex<'a> {
    pub fn new(matrix: &'a EmbeddingMatrix, sim: Similarity) -> Self {
        let norms = match sim {
            Similarity::Dot => Vec::new(),
            Similarity::Cosine => (0..matrix.len()).map(|i| norm(matrix.row(i))).collect(),
        };
        Self { matrix, sim, norms }
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        self.matrix
    }

    fn check(&self, query: &[f32]) -> Result<(), RetrievalError> {
        if query.len() != self.matrix.dim() {
            return Err(RetrievalError::DimMismatch {
                expected: self.matrix.dim(),
                found: query.len(),
            });
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::NonFiniteQuery);
        }
        Ok(())
    }

    /// Similarity of `query` to row `i`.
    pub fn score_row(&self, query: &[f32], query_norm: f64, i: usize) -> f64 {
        let d = dot(query, self.matrix.row(i));
        match self.sim {
            Similarity::Dot => d,
            Similarity::Cosine => {
                let denom = query_norm * self.norms[i];
                if denom == 0.0 {
                    0.0
                } else {
                    d / denom
                }
            }
        }
    }

    pub fn score_all(&self, query: &[f32]) -> Result<Vec<f64>, RetrievalError> {
        self.check(query)?;
        let qn = norm(query);
        Ok((0..self.matrix.len()).map(|i| self.score_row(query, qn, i)).collect())
    }

    pub fn top_k(&self, query: &[f32], k: usize) -> Result<Vec<RunEntry>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let scores = self.score_all(query)?;
        let ids = self.matrix.doc_ids();
        let cmp = |&a: &usize, &b: &usize| rank_order(scores[a], &ids[a], scores[b], &ids[b]);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        Ok(order
            .into_iter()
            .enumerate()
            .map(|(r, i)| RunEntry {
                doc_id: ids[i].clone(),
                score: scores[i],
                rank: r as u32 + 1,
            })
            .collect())
    }

    pub fn batch_search(&self, queries: &BTreeMap<String, Vec<f32>>, k: usize) -> Result<Run, RetrievalError> {
        let results: Vec<(String, Vec<RunEntry>)> = queries
            .par_iter()
            .map(|(qid, vec)| {
                self.top_k(vec, k)
                    .map(|entries| (qid.clone(), entries))
                    .map_err(|e| RetrievalError::InQuery {
                        query_id: qid.clone(),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Run {
            model_id: self.matrix.model_id().to_string(),
            queries: results.into_iter().collect(),
        })
    }
}

pub fn top_k(
    matrix: &EmbeddingMatrix,
    query: &[f32],
    k: usize,
    sim: Similarity,
) -> Result<Vec<RunEntry>, RetrievalError> {
    SearchIndex::new(matrix, sim).top_k(query, k)
}

pub fn batch_search(
    matrix: &EmbeddingMatrix,
    queries: &BTreeMap<String, Vec<f32>>,
    k: usize,
    sim: Similarity,
) -> Result<Run, RetrievalError> {
    SearchIndex::new(matrix, sim).batch_search(queries, k)
}

/// Writes `qid Q0 docid rank score tag`, scores at 6 decimals, tag = model id.
pub fn write_trec_run<W: Write>(run: &Run, mut sink: W) -> io::Result<()> {
    let tag = if run.model_id.is_empty() { "run" } else { &run.model_id };
    for (qid, entries) in &run.queries {
        for e in entries {
            writeln!(sink, "{qid} Q0 {} {} {:.6} {tag}", e.doc_id, e.rank, e.score)?;
        }
    }
    Ok(())
}

pub fn read_trec_run<R: BufRead>(source: R) -> Result<Run, RetrievalError> {
    let mut run = Run::default();
    let malformed = |line: usize, reason: String| RetrievalError::MalformedRow { line, reason };
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| malformed(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(malformed(line_no, format!("expected 6 columns, found {}", cols.len())));
        }
        let rank: u32 = cols[3]
            .parse()
            .map_err(|_| malformed(line_no, format!("bad rank {:?}", cols[3])))?;
        if rank == 0 {
            return Err(malformed(line_no, "rank must be 1-based".into()));
        }
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| malformed(line_no, format!("bad score {:?}", cols[4])))?;
        if run.model_id.is_empty() {
            run.model_id = cols[5].to_string();
        }
        run.queries.entry(cols[0].to_string()).or_default().push(RunEntry {
            doc_id: cols[2].to_string(),
            score,
            rank,
        });
    }
    for entries in run.queries.values_mut() {
        entries.sort_by_key(|e| e.rank);
    }
    Ok(run)
}
