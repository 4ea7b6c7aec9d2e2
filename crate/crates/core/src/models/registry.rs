use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::method::{Direction, Method, RankedModel, SelectionResult};
use crate::retrieval::Similarity;

/// Endpoint value selecting the in-process hashing encoder.
pub const STUB_ENDPOINT: &str = "stub";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry has no models")]
    EmptyRegistry,
    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),
    #[error("model {model}: {reason}")]
    InvalidRecord { model: String, reason: String },
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("registry parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One dense retriever in the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub dim: usize,
    pub sim: Similarity,
    /// `"stub"`, an `http(s)://` base URL, or a name registered with [`crate::models::Clients`].
    #[serde(default = "default_endpoint")]
    pub encoder_endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msmarco_ndcg10: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mteb_avg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle_path: Option<PathBuf>,
    #[serde(default)]
    pub description: String,
    /// Queries and documents are encoded with different towers.
    #[serde(default)]
    pub asymmetric: bool,
}

fn default_endpoint() -> String {
    STUB_ENDPOINT.to_string()
}

impl ModelRecord {
    pub fn stub(model_id: impl Into<String>, dim: usize, sim: Similarity) -> Self {
        Self {
            model_id: model_id.into(),
            dim,
            sim,
            encoder_endpoint: default_endpoint(),
            msmarco_ndcg10: None,
            mteb_avg: None,
            bundle_path: None,
            description: String::new(),
            asymmetric: false,
        }
    }

    fn validate(&self) -> Result<(), RegistryError> {
        let invalid = |reason: &str| RegistryError::InvalidRecord {
            model: self.model_id.clone(),
            reason: reason.to_string(),
        };
        if self.model_id.is_empty()
            || self
                .model_id
                .chars()
                .any(|c| c.is_whitespace() || c == '/' || c == '\\')
        {
            return Err(invalid(
                "model id must be non-empty without whitespace or path separators",
            ));
        }
        if self.dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        if let Some(v) = self.msmarco_ndcg10 {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid("msmarco_ndcg10 must lie in [0, 1]"));
            }
        }
        if self.mteb_avg.is_some_and(|v| !v.is_finite()) {
            return Err(invalid("mteb_avg must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RegistryFile {
    #[serde(default, rename = "model")]
    models: Vec<ModelRecord>,
}

/// The model pool, keyed by model id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    models: BTreeMap<String, ModelRecord>,
}

impl Registry {
    pub fn new(records: impl IntoIterator<Item = ModelRecord>) -> Result<Self, RegistryError> {
        let mut models = BTreeMap::new();
        for r in records {
            r.validate()?;
            if models.contains_key(&r.model_id) {
                return Err(RegistryError::DuplicateModel(r.model_id));
            }
            models.insert(r.model_id.clone(), r);
        }
        Ok(Self { models })
    }

    /// Parses `[[model]]` blocks carrying the [`ModelRecord`] fields.
    pub fn from_toml_str(s: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(s)?;
        Self::new(file.models)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RegistryFile {
            models: self.models.values().cloned().collect(),
        })
        .expect("registry serializes")
    }

    pub fn get(&self, model_id: &str) -> Result<&ModelRecord, RegistryError> {
        self.models
            .get(model_id)
            .ok_or_else(|| RegistryError::UnknownModel(model_id.to_string()))
    }

    /// Records in model-id order.
    pub fn iter(&self) -> impl Iterator<Item = &ModelRecord> {
        self.models.values()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.models.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderboardField {
    MsmarcoNdcg10,
    MtebAvg,
}

impl LeaderboardField {
    fn value(self, r: &ModelRecord) -> Option<f64> {
        match self {
            LeaderboardField::MsmarcoNdcg10 => r.msmarco_ndcg10,
            LeaderboardField::MtebAvg => r.mteb_avg,
        }
    }

    fn method(self) -> Method {
        match self {
            LeaderboardField::MsmarcoNdcg10 => Method::Msmarco,
            LeaderboardField::MtebAvg => Method::Mteb,
        }
    }
}

/// Orders by the published number, descending; models without one come last.
/// Ties and the missing group are ordered by model id.
pub fn leaderboard_rank(registry: &Registry, field: LeaderboardField) -> Result<SelectionResult, RegistryError> {
    if registry.is_empty() {
        return Err(RegistryError::EmptyRegistry);
    }
    let mut rows: Vec<(&str, Option<f64>)> = registry.iter().map(|r| (r.model_id.as_str(), field.value(r))).collect();
    rows.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.0.cmp(b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(b.0),
    });
    Ok(SelectionResult {
        method: field.method(),
        direction: Direction::HigherIsBetter,
        ranked: rows
            .into_iter()
            .enumerate()
            .map(|(i, (id, v))| RankedModel {
                model_id: id.to_string(),
                value: v,
                rank: i as u32 + 1,
            })
            .collect(),
        per_query_diagnostics: None,
    })
}
