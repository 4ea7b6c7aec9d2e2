//! Unsupervised selection of dense retrievers for a collection without relevance judgments.
//!
//! The crate is organized around the two stages of a selection job:
//!
//! - **encoding**: every model in the [`models::Registry`] encodes the corpus once
//!   through an [`models::Encoder`] client; matrices are cached in the
//!   [`embeddings`] `DQV1` format.
//! - **selection**: a [`method::Method`] assigns one score per model and the pool is
//!   ranked by it ([`selection::run_method`]).
//!
//! Methods:
//!
//! | method | module | needs queries | encoder-bound |
//! |---|---|---|---|
//! | Binary Entropy, NQC, SMV, σ-max, WIG | [`qpp`] | yes | no |
//! | Fusion | [`fusion`] | yes | no |
//! | Query Alteration | [`perturbation`] | yes | yes |
//! | LARMOR (pseudo-queries) | [`perturbation`] | no | yes |
//! | MS MARCO / MTEB leaderboards | [`models`] | no | no |
//!
//! Retrieval is exact ([`retrieval`]); ranking metrics (nDCG@10, Kendall τ,
//! Δ-best) live in [`fusion`].

pub mod corpus;
pub mod embeddings;
pub mod fusion;
pub mod method;
pub mod models;
pub mod perturbation;
pub mod qpp;
pub mod retrieval;
pub mod selection;
pub mod synthetic;

pub use corpus::{Collection, Document, Qrels, Query};
pub use embeddings::EmbeddingMatrix;
pub use method::{Direction, Method, MethodScore, QueueClass, RankedModel, SelectionResult};
pub use retrieval::{Run, RunEntry, Similarity};
pub use selection::{SelectionError, SelectionInput, SelectionParams};
