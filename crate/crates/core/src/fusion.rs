//! Reciprocal rank fusion, fused pseudo-judgments, and the ranking metrics used
//! both by the Fusion method and for meta-evaluation against real qrels.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::corpus::Qrels;
use crate::method::{Direction, Method, MethodScore};
use crate::retrieval::{rank_order, Run};

pub const RRF_C: f64 = 60.0;
pub const PSEUDO_QRELS_DEPTH: usize = 10;
pub const NDCG_CUTOFF: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("fusion needs at least two runs, got {0}")]
    TooFewModels(usize),
    #[error("runs {0:?} and {1:?} cover different query sets")]
    QuerySetMismatch(String, String),
    #[error("rrf constant must be positive")]
    BadConstant,
    #[error("rankings contain different model sets or duplicates")]
    MismatchedRankings,
    #[error("rank correlation needs at least two items")]
    TooFewItems,
    #[error("all effectiveness values are zero")]
    DegenerateScores,
    #[error("unknown model {0:?}")]
    UnknownModel(String),
}

/// query id -> (doc id, fused score), descending with doc-id tie-break.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedRanking {
    pub queries: BTreeMap<String, Vec<(String, f64)>>,
}

impl FusedRanking {
    /// Replays the fused lists as a run with ranks 1..n.
    pub fn as_run(&self, model_id: &str) -> Run {
        let mut run = Run::new(model_id);
        for (q, docs) in &self.queries {
            run.queries.insert(
                q.clone(),
                docs.iter()
                    .enumerate()
                    .map(|(i, (d, s))| crate::retrieval::RunEntry {
                        doc_id: d.clone(),
                        score: *s,
                        rank: i as u32 + 1,
                    })
                    .collect(),
            );
        }
        run
    }
}

/// `fused(d) = Σ_m 1/(c + rank_m(d))`, summing each document's contributions in
/// ascending order so the result does not depend on the order of `runs`.
pub fn rrf_fuse(runs: &[Run], c: f64) -> Result<FusedRanking, FusionError> {
    if runs.len() < 2 {
        return Err(FusionError::TooFewModels(runs.len()));
    }
    if c.is_nan() || c <= 0.0 {
        return Err(FusionError::BadConstant);
    }
    let keys: BTreeSet<&String> = runs[0].queries.keys().collect();
    if let Some(other) = runs[1..]
        .iter()
        .find(|r| r.queries.keys().collect::<BTreeSet<_>>() != keys)
    {
        return Err(FusionError::QuerySetMismatch(
            runs[0].model_id.clone(),
            other.model_id.clone(),
        ));
    }

    let mut fused = FusedRanking::default();
    for qid in keys {
        let mut contributions: HashMap<&str, Vec<f64>> = HashMap::new();
        for run in runs {
            for e in &run.queries[qid] {
                contributions
                    .entry(e.doc_id.as_str())
                    .or_default()
                    .push(1.0 / (c + e.rank as f64));
            }
        }
        let mut docs: Vec<(String, f64)> = contributions
            .into_iter()
            .map(|(d, mut parts)| {
                parts.sort_by(f64::total_cmp);
                (d.to_string(), parts.iter().sum())
            })
            .collect();
        docs.sort_by(|a, b| rank_order(a.1, &a.0, b.1, &b.0));
        fused.queries.insert(qid.clone(), docs);
    }
    Ok(fused)
}

/// Top-`depth` fused documents per query, graded `depth − position + 1`.
pub fn pseudo_qrels_from_fused(fused: &FusedRanking, depth: usize) -> Qrels {
    let mut qrels = Qrels::new();
    for (q, docs) in &fused.queries {
        for (pos, (d, _)) in docs.iter().take(depth).enumerate() {
            qrels.insert(q.clone(), d.clone(), (depth - pos) as u32);
        }
    }
    qrels
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(position: usize) -> f64 {
    // position is 0-based; log2(i + 1) with i 1-based
    ((position + 2) as f64).log2()
}

/// nDCG@k with exponential gain; 0 when the query has no positive judgment.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judgments: Option<&BTreeMap<String, u32>>, k: usize) -> f64 {
    let Some(judgments) = judgments else {
        return 0.0;
    };
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return 0.0;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i))
        .sum();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| judgments.get(d.as_ref()).map_or(0.0, |&g| gain(g) / discount(i)))
        .sum();
    dcg / idcg
}

/// Per-query nDCG@k of `run` against `qrels`, over the queries of `qrels`.
pub fn per_query_ndcg(run: &Run, qrels: &Qrels, k: usize) -> BTreeMap<String, f64> {
    qrels
        .iter()
        .map(|(q, judgments)| (q.clone(), ndcg_at_k(&run.ranked_ids(q), Some(judgments), k)))
        .collect()
}

pub fn mean_ndcg(run: &Run, qrels: &Qrels, k: usize) -> f64 {
    let per_query = per_query_ndcg(run, qrels, k);
    if per_query.is_empty() {
        return 0.0;
    }
    per_query.values().sum::<f64>() / per_query.len() as f64
}

/// Mean nDCG@10 of a model's run against fused pseudo-judgments.
pub fn fusion_method_score(run: &Run, pseudo: &Qrels) -> MethodScore {
    fusion_method_score_with(run, pseudo, |ranking, judgments| {
        ndcg_at_k(ranking, Some(judgments), NDCG_CUTOFF)
    })
}

/// [`fusion_method_score`] with a caller-supplied ranking similarity.
pub fn fusion_method_score_with<F>(run: &Run, pseudo: &Qrels, similarity: F) -> MethodScore
where
    F: Fn(&[&str], &BTreeMap<String, u32>) -> f64,
{
    let values: Vec<f64> = pseudo
        .iter()
        .map(|(q, judgments)| similarity(&run.ranked_ids(q), judgments))
        .collect();
    let value = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    MethodScore {
        model_id: run.model_id.clone(),
        method: Method::Fusion,
        value,
        direction: Direction::HigherIsBetter,
    }
}

/// Kendall's τ-a between two orderings of the same ids.
pub fn kendall_tau<S: AsRef<str>>(rank_a: &[S], rank_b: &[S]) -> Result<f64, FusionError> {
    let n = rank_a.len();
    let pos_b: HashMap<&str, usize> = rank_b.iter().enumerate().map(|(i, s)| (s.as_ref(), i)).collect();
    let distinct_a: BTreeSet<&str> = rank_a.iter().map(AsRef::as_ref).collect();
    if n != rank_b.len() || pos_b.len() != n || distinct_a.len() != n {
        return Err(FusionError::MismatchedRankings);
    }
    let b_positions: Vec<usize> = rank_a
        .iter()
        .map(|s| pos_b.get(s.as_ref()).copied().ok_or(FusionError::MismatchedRankings))
        .collect::<Result<_, _>>()?;
    if n < 2 {
        return Err(FusionError::TooFewItems);
    }
    let mut balance: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            balance += if b_positions[i] < b_positions[j] { 1 } else { -1 };
        }
    }
    Ok(balance as f64 / (n * (n - 1) / 2) as f64)
}

/// Percentage drop of the selected model's effectiveness from the best one.
pub fn delta_best(true_ndcg: &BTreeMap<String, f64>, selected: &str) -> Result<f64, FusionError> {
    let chosen = *true_ndcg
        .get(selected)
        .ok_or_else(|| FusionError::UnknownModel(selected.to_string()))?;
    let best = true_ndcg.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == 0.0 {
        return Err(FusionError::DegenerateScores);
    }
    Ok(100.0 * (best - chosen) / best)
}

/// Models ordered by effectiveness, descending, ties by id.
pub fn order_by_value(values: &BTreeMap<String, f64>) -> Vec<String> {
    let mut ids: Vec<(&String, f64)> = values.iter().map(|(k, v)| (k, *v)).collect();
    ids.sort_by(|a, b| rank_order(a.1, a.0, b.1, b.0));
    ids.into_iter().map(|(k, _)| k.clone()).collect()
}
