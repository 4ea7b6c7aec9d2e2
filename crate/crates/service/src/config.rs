//! Service configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use dq_core::models::{Registry, RegistryError, STUB_ENDPOINT};
use dq_core::SelectionParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Registry used when neither the config nor the command line names one.
pub const DEFAULT_REGISTRY: &str = include_str!("../config/models.toml");

pub const DEFAULT_UPLOAD_CAP: u64 = 2 * 1024 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub heavy_workers: usize,
    pub light_workers: usize,
    pub default_k: usize,
    pub seed: u64,
    pub normalize_before_qpp: bool,
    pub pseudo_queries_per_doc: usize,
    pub upload_cap_bytes: u64,
    /// Bearer token required on mutating endpoints; open when unset.
    pub auth_token: Option<String>,
    /// `"stub"` or an `http(s)://` base URL serving `POST /generate`.
    pub generator_endpoint: String,
    /// Overrides the `encoder_endpoint` of every registry model when set.
    pub encoder_endpoint: Option<String>,
    pub registry_path: Option<PathBuf>,
    /// Directory of a built dashboard to serve at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("dq-data"),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            heavy_workers: 1,
            light_workers: 2,
            default_k: 100,
            seed: 7,
            normalize_before_qpp: false,
            pseudo_queries_per_doc: 1,
            upload_cap_bytes: DEFAULT_UPLOAD_CAP,
            auth_token: None,
            generator_endpoint: STUB_ENDPOINT.to_string(),
            encoder_endpoint: None,
            registry_path: None,
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.data_dir);
        config.registry_path.as_mut().map(resolve);
        config.static_dir.as_mut().map(resolve);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.heavy_workers == 0 || self.light_workers == 0 {
            return Err(ConfigError::Invalid("each queue needs at least one worker".into()));
        }
        if self.default_k == 0 || self.pseudo_queries_per_doc == 0 {
            return Err(ConfigError::Invalid(
                "default_k and pseudo_queries_per_doc must be positive".into(),
            ));
        }
        if self.upload_cap_bytes == 0 {
            return Err(ConfigError::Invalid("upload_cap_bytes must be positive".into()));
        }
        Ok(())
    }

    /// Job parameters before per-job overrides.
    pub fn default_params(&self) -> SelectionParams {
        SelectionParams {
            k: self.default_k,
            seed: self.seed,
            normalize_before_qpp: self.normalize_before_qpp,
            pseudo_queries_per_doc: self.pseudo_queries_per_doc,
            ..SelectionParams::default()
        }
    }

    pub fn registry(&self) -> Result<Registry, ConfigError> {
        let mut registry = match &self.registry_path {
            Some(p) => Registry::load(p)?,
            None => Registry::from_toml_str(DEFAULT_REGISTRY)?,
        };
        if let Some(endpoint) = &self.encoder_endpoint {
            let records = registry.iter().cloned().map(|mut r| {
                r.encoder_endpoint = endpoint.clone();
                r
            });
            registry = Registry::new(records.collect::<Vec<_>>())?;
        }
        Ok(registry)
    }
}
