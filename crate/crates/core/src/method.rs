//! The selection-method catalog and the per-model scores every method produces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BinaryEntropy,
    QueryAlteration,
    Smv,
    Nqc,
    Sigma,
    Wig,
    Fusion,
    Msmarco,
    Mteb,
    Larmor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "higher_is_better" => Ok(Direction::HigherIsBetter),
            "lower_is_better" => Ok(Direction::LowerIsBetter),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::HigherIsBetter => "higher_is_better",
            Direction::LowerIsBetter => "lower_is_better",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueClass {
    Heavy,
    Light,
}

impl fmt::Display for QueueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueueClass::Heavy => "heavy",
            QueueClass::Light => "light",
        })
    }
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::BinaryEntropy,
        Method::QueryAlteration,
        Method::Smv,
        Method::Nqc,
        Method::Sigma,
        Method::Wig,
        Method::Fusion,
        Method::Msmarco,
        Method::Mteb,
        Method::Larmor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BinaryEntropy => "binary_entropy",
            Method::QueryAlteration => "query_alteration",
            Method::Smv => "smv",
            Method::Nqc => "nqc",
            Method::Sigma => "sigma",
            Method::Wig => "wig",
            Method::Fusion => "fusion",
            Method::Msmarco => "msmarco",
            Method::Mteb => "mteb",
            Method::Larmor => "larmor",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Method::BinaryEntropy => "Binary Entropy",
            Method::QueryAlteration => "Query Alteration",
            Method::Smv => "SMV",
            Method::Nqc => "NQC",
            Method::Sigma => "σ-max",
            Method::Wig => "WIG",
            Method::Fusion => "Fusion",
            Method::Msmarco => "MS MARCO leaderboard",
            Method::Mteb => "MTEB leaderboard",
            Method::Larmor => "LARMOR",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Method::BinaryEntropy => {
                "Retrieves the top documents for every query, min-max normalizes their scores and \
                 averages the binary entropy of the normalized scores. A model that separates a few \
                 confident hits from the rest has low entropy and ranks higher."
            }
            Method::QueryAlteration => {
                "Drops one query term at a time and re-scores the originally retrieved documents. \
                 The average standard deviation of those scores, relative to the original score \
                 level, measures sensitivity to query perturbations; robust models rank higher."
            }
            Method::Smv => {
                "Score Magnitude and Variance: combines the magnitude of the retrieved scores with \
                 their log-ratio spread around the mean, normalized by the query's similarity to the \
                 corpus centroid. Higher is better."
            }
            Method::Nqc => {
                "Normalized Query Commitment: the standard deviation of the top retrieved scores \
                 divided by the query's similarity to the corpus centroid, averaged over queries. \
                 Higher is better."
            }
            Method::Sigma => {
                "σ-max: the largest standard deviation of the top-x retrieved scores over all \
                 cutoffs x, averaged over queries. Higher is better."
            }
            Method::Wig => {
                "Weighted Information Gain: the mean gap between the retrieved scores and the \
                 query's similarity to the corpus centroid, averaged over queries. Higher is better."
            }
            Method::Fusion => {
                "Fuses the rankings of every model in the pool with reciprocal rank fusion, treats \
                 the fused top documents as graded pseudo-relevance judgments, and scores each model \
                 by its nDCG@10 against them. Favors the model most consistent with the pool."
            }
            Method::Msmarco => {
                "Ranks models by their published nDCG@10 on the MS MARCO passage leaderboard. \
                 Needs neither queries nor encoding."
            }
            Method::Mteb => {
                "Ranks models by their published average score on the MTEB retrieval leaderboard. \
                 Needs neither queries nor encoding."
            }
            Method::Larmor => {
                "Samples documents from the collection, generates a pseudo-query for each one and \
                 judges its source document relevant. Each model is scored by its nDCG@10 on these \
                 pseudo-queries. Needs no queries."
            }
        }
    }

    /// The job parameters offered to users when submitting this method.
    pub fn user_parameters(self) -> &'static [&'static str] {
        match self {
            Method::Msmarco | Method::Mteb => &[],
            Method::Larmor => &["n_docs", "seed"],
            Method::QueryAlteration => &["k", "cap", "seed"],
            _ => &["k"],
        }
    }

    /// Default sort direction. Query alteration may be overridden per job.
    pub fn direction(self) -> Direction {
        match self {
            Method::BinaryEntropy | Method::QueryAlteration => Direction::LowerIsBetter,
            _ => Direction::HigherIsBetter,
        }
    }

    pub fn requires_queries(self) -> bool {
        !matches!(self, Method::Msmarco | Method::Mteb | Method::Larmor)
    }

    /// Whether the method consumes stored document embeddings.
    pub fn requires_embeddings(self) -> bool {
        !matches!(self, Method::Msmarco | Method::Mteb)
    }

    /// Methods that call encoders per query or per generated text run on the heavy queue.
    pub fn encoder_bound(self) -> bool {
        matches!(self, Method::QueryAlteration | Method::Larmor)
    }

    pub fn queue_class(self, embeddings_cached: bool) -> QueueClass {
        if self.encoder_bound() || (self.requires_embeddings() && !embeddings_cached) {
            QueueClass::Heavy
        } else {
            QueueClass::Light
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMethod(pub String);

impl fmt::Display for UnknownMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown method {:?}", self.0)
    }
}

impl std::error::Error for UnknownMethod {}

impl FromStr for Method {
    type Err = UnknownMethod;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// One scalar per model per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub model_id: String,
    pub method: Method,
    pub value: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub model_id: String,
    /// `None` only for leaderboard methods when a model has no published number.
    pub value: Option<f64>,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub direction: Direction,
    pub ranked: Vec<RankedModel>,
    /// model id -> query id -> per-query value
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_query_diagnostics: Option<BTreeMap<String, BTreeMap<String, f64>>>,
}

impl SelectionResult {
    pub fn best(&self) -> Option<&str> {
        self.ranked.first().map(|r| r.model_id.as_str())
    }

    pub fn model_order(&self) -> Vec<&str> {
        self.ranked.iter().map(|r| r.model_id.as_str()).collect()
    }

    /// Plain-text table, one model per line, values at 6 decimals.
    pub fn to_table(&self) -> String {
        let width = self
            .ranked
            .iter()
            .map(|r| r.model_id.len())
            .max()
            .unwrap_or(0)
            .max("model".len());
        let mut out = format!("# method: {} ({})\n", self.method, self.direction);
        out.push_str(&format!("{:<4}  {:<width$}  {}\n", "rank", "model", "value"));
        for r in &self.ranked {
            let value = r.value.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!("{:<4}  {:<width$}  {value}\n", r.rank, r.model_id));
        }
        out
    }
}

/// Orders models by value in the given direction, ties by model id; ranks are 1..n.
pub fn rank_scores(method: Method, direction: Direction, scores: &[MethodScore]) -> SelectionResult {
    let mut sorted: Vec<&MethodScore> = scores.iter().collect();
    sorted.sort_by(|a, b| {
        let by_value = match direction {
            Direction::HigherIsBetter => b.value.total_cmp(&a.value),
            Direction::LowerIsBetter => a.value.total_cmp(&b.value),
        };
        by_value.then_with(|| a.model_id.cmp(&b.model_id))
    });
    SelectionResult {
        method,
        direction,
        ranked: sorted
            .into_iter()
            .enumerate()
            .map(|(i, s)| RankedModel {
                model_id: s.model_id.clone(),
                value: Some(s.value),
                rank: i as u32 + 1,
            })
            .collect(),
        per_query_diagnostics: None,
    }
}
