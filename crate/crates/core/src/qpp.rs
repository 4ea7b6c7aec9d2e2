//! Score-distribution estimators over a single query's top-k retrieval scores.
//!
//! All estimators take the non-increasing top-k scores of one query together
//! with `μ_c`, the query's similarity to the corpus centroid, which plays the
//! role the whole-collection score plays for lexical retrieval. Standard
//! deviations are population deviations so a one-element list is well defined.

use thiserror::Error;

use crate::embeddings::EmbeddingMatrix;
use crate::method::{Method, MethodScore};
use crate::retrieval::{similarity, RetrievalError, Similarity};

/// Guard for divisions by `|μ_c|`.
pub const NORMALIZER_EPS: f64 = 1e-9;
/// Offset applied when SMV has to shift non-positive scores.
pub const SMV_SHIFT_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QppError {
    #[error("empty score list")]
    EmptyInput,
    #[error("scores must be finite and non-increasing")]
    InvalidScores,
    #[error("no queries to aggregate")]
    NoQueries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryScoreList {
    query_id: String,
    scores: Vec<f64>,
    corpus_score: f64,
}

impl QueryScoreList {
    pub fn new(query_id: impl Into<String>, scores: Vec<f64>, corpus_score: f64) -> Result<Self, QppError> {
        if scores.is_empty() {
            return Err(QppError::EmptyInput);
        }
        if !corpus_score.is_finite() || scores.iter().any(|s| !s.is_finite()) || scores.windows(2).any(|w| w[1] > w[0])
        {
            return Err(QppError::InvalidScores);
        }
        Ok(Self {
            query_id: query_id.into(),
            scores,
            corpus_score,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn corpus_score(&self) -> f64 {
        self.corpus_score
    }

    /// Applies the min-max map of the scores to both the scores and `μ_c`.
    pub fn minmax_normalized(&self) -> Self {
        let (max, min) = (self.scores[0], *self.scores.last().unwrap());
        let map = |x: f64| if max > min { (x - min) / (max - min) } else { 0.5 };
        Self {
            query_id: self.query_id.clone(),
            scores: self.scores.iter().map(|&s| map(s)).collect(),
            corpus_score: map(self.corpus_score),
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn normalizer(corpus_score: f64) -> f64 {
    corpus_score.abs().max(NORMALIZER_EPS)
}

/// `pᵢ = (sᵢ − min)/(max − min)`; every `pᵢ` is 0.5 when all scores are equal.
pub fn minmax_normalize(scores: &[f64]) -> Result<Vec<f64>, QppError> {
    if scores.is_empty() {
        return Err(QppError::EmptyInput);
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.5; scores.len()]);
    }
    Ok(scores.iter().map(|s| (s - min) / (max - min)).collect())
}

/// Mean of all document vectors, accumulated in f64.
pub fn corpus_centroid(matrix: &EmbeddingMatrix) -> Vec<f32> {
    let mut acc = vec![0f64; matrix.dim()];
    for (_, row) in matrix.rows() {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x as f64;
        }
    }
    let n = matrix.len().max(1) as f64;
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

pub fn corpus_centroid_score(matrix: &EmbeddingMatrix, query: &[f32], sim: Similarity) -> Result<f64, RetrievalError> {
    centroid_score(&corpus_centroid(matrix), query, sim)
}

/// Same as [`corpus_centroid_score`] with a precomputed centroid.
pub fn centroid_score(centroid: &[f32], query: &[f32], sim: Similarity) -> Result<f64, RetrievalError> {
    if centroid.len() != query.len() {
        return Err(RetrievalError::DimMismatch {
            expected: centroid.len(),
            found: query.len(),
        });
    }
    Ok(similarity(sim, query, centroid))
}

/// Normalized query commitment: `std(scores) / max(|μ_c|, ε)`.
pub fn nqc(q: &QueryScoreList) -> f64 {
    population_std(&q.scores) / normalizer(q.corpus_score)
}

/// Score magnitude and variance: `(1/k)·Σ sᵢ·|ln(sᵢ/s̄)| / max(|μ_c|, ε)`.
///
/// The logarithm needs positive scores. Lists whose minimum is not positive are
/// shifted to `sᵢ − min + 1e-6` first; positive lists are used as they are.
pub fn smv(q: &QueryScoreList) -> f64 {
    let min = *q.scores.last().unwrap();
    let shifted: Vec<f64> = if min > 0.0 {
        q.scores.clone()
    } else {
        q.scores.iter().map(|s| s - min + SMV_SHIFT_EPS).collect()
    };
    let m = mean(&shifted);
    let sum: f64 = shifted.iter().map(|&s| s * (s / m).ln().abs()).sum();
    sum / shifted.len() as f64 / normalizer(q.corpus_score)
}

/// Maximum over cutoffs `x ∈ 1..=k` of the deviation of the top-x scores.
pub fn sigma_max(q: &QueryScoreList) -> f64 {
    (1..=q.scores.len())
        .map(|x| population_std(&q.scores[..x]))
        .fold(0.0, f64::max)
}

/// Weighted information gain without the lexical `1/√|q|` factor: `mean(sᵢ − μ_c)`.
pub fn wig(q: &QueryScoreList) -> f64 {
    q.scores.iter().map(|s| s - q.corpus_score).sum::<f64>() / q.scores.len() as f64
}

fn entropy_bits(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Mean binary entropy of the min-max normalized scores.
pub fn binary_entropy(q: &QueryScoreList) -> f64 {
    let p = minmax_normalize(&q.scores).expect("QueryScoreList is non-empty");
    p.iter().map(|&x| entropy_bits(x)).sum::<f64>() / p.len() as f64
}

/// Per-query estimator for one of the score-distribution methods.
pub fn estimator(method: Method) -> Option<fn(&QueryScoreList) -> f64> {
    match method {
        Method::Nqc => Some(nqc),
        Method::Smv => Some(smv),
        Method::Sigma => Some(sigma_max),
        Method::Wig => Some(wig),
        Method::BinaryEntropy => Some(binary_entropy),
        _ => None,
    }
}

/// Arithmetic mean over queries, with the method's default direction.
pub fn aggregate(per_query: &[f64], method: Method, model_id: &str) -> Result<MethodScore, QppError> {
    if per_query.is_empty() {
        return Err(QppError::NoQueries);
    }
    Ok(MethodScore {
        model_id: model_id.to_string(),
        method,
        value: mean(per_query),
        direction: method.direction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(scores: &[f64], mu: f64) -> QueryScoreList {
        QueryScoreList::new("q", scores.to_vec(), mu).unwrap()
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn normalize() {
        assert_eq!(minmax_normalize(&[3.0, 2.0, 1.0]).unwrap(), [1.0, 0.5, 0.0]);
        assert_eq!(minmax_normalize(&[2.0, 2.0, 2.0]).unwrap(), [0.5, 0.5, 0.5]);
        assert_eq!(minmax_normalize(&[]), Err(QppError::EmptyInput));
    }

    #[test]
    fn rejects_bad_lists() {
        assert_eq!(QueryScoreList::new("q", vec![], 0.0), Err(QppError::EmptyInput));
        assert_eq!(
            QueryScoreList::new("q", vec![1.0, 2.0], 0.0),
            Err(QppError::InvalidScores)
        );
        assert_eq!(
            QueryScoreList::new("q", vec![f64::NAN], 0.0),
            Err(QppError::InvalidScores)
        );
    }

    #[test]
    fn centroid() {
        let m = EmbeddingMatrix::new("m", 2, vec!["a".into(), "b".into()], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(corpus_centroid_score(&m, &[1.0, 0.0], Similarity::Dot).unwrap(), 0.5);

        let single = EmbeddingMatrix::new("m", 2, vec!["a".into()], vec![0.3, 0.4]).unwrap();
        assert_eq!(
            corpus_centroid_score(&single, &[1.0, 2.0], Similarity::Cosine).unwrap(),
            crate::retrieval::cosine(&[1.0, 2.0], &[0.3, 0.4])
        );

        let zeros = EmbeddingMatrix::new("m", 2, vec!["a".into(), "b".into()], vec![0.0; 4]).unwrap();
        assert_eq!(
            corpus_centroid_score(&zeros, &[1.0, 0.0], Similarity::Cosine).unwrap(),
            0.0
        );
        assert!(corpus_centroid_score(&zeros, &[1.0], Similarity::Dot).is_err());
    }

    #[test]
    fn nqc_values() {
        close(nqc(&list(&[1.0, 1.0, 1.0], 2.0)), 0.0);
        close(nqc(&list(&[3.0, 2.0, 1.0], 2.0)), (2.0f64 / 3.0).sqrt() / 2.0);
        assert!(nqc(&list(&[3.0, 2.0, 1.0], 0.0)).is_finite());
    }

    #[test]
    fn smv_values() {
        close(smv(&list(&[0.7, 0.7], 1.0)), 0.0);
        close(smv(&list(&[-0.2, -0.2], 1.0)), 0.0);
        let expected = (2.0 * (4.0f64 / 3.0).ln().abs() + (2.0f64 / 3.0).ln().abs()) / 2.0;
        close(smv(&list(&[2.0, 1.0], 1.0)), expected);
        close(smv(&list(&[5.0], 1.0)), 0.0);
    }

    #[test]
    fn sigma_values() {
        close(sigma_max(&list(&[1.0, 1.0, 1.0], 0.0)), 0.0);
        close(sigma_max(&list(&[3.0, 2.0, 1.0], 0.0)), (2.0f64 / 3.0).sqrt());
    }

    #[test]
    fn wig_values() {
        close(wig(&list(&[2.0, 2.0], 2.0)), 0.0);
        close(wig(&list(&[3.0, 2.0, 1.0], 2.0)), 0.0);
        close(wig(&list(&[3.0, 2.0, 1.0], 0.0)), 2.0);
    }

    #[test]
    fn entropy_values() {
        close(binary_entropy(&list(&[3.0, 2.0, 1.0], 0.0)), 1.0 / 3.0);
        close(binary_entropy(&list(&[4.0, 4.0, 4.0], 0.0)), 1.0);
        close(binary_entropy(&list(&[4.0, 1.0], 0.0)), 0.0);
    }

    #[test]
    fn aggregation() {
        close(aggregate(&[0.2, 0.4], Method::Nqc, "m").unwrap().value, 0.3);
        assert_eq!(aggregate(&[0.7], Method::Wig, "m").unwrap().value, 0.7);
        assert_eq!(aggregate(&[], Method::Wig, "m"), Err(QppError::NoQueries));
        assert_eq!(
            aggregate(&[0.1], Method::BinaryEntropy, "m").unwrap().direction,
            crate::method::Direction::LowerIsBetter
        );
    }
}
