//! The model pool and the client protocols standing in for model inference.

mod bundle;
mod client;
mod protocol;
mod registry;
mod stub;

pub use bundle::{build_bundle, ADAPTER_SKELETON, BUNDLE_FILES, MODEL_CARD, USAGE};
pub use client::{
    encode, encode_batched, encode_corpus, generate_queries, ClientError, Clients, EncodeCorpusError, Encoder,
    Generator, HttpEncoder, HttpGenerator, DEFAULT_BATCH_SIZE,
};
pub use protocol::{EncodeMode, EncodeRequest, EncodeResponse, GenerateRequest, GenerateResponse};
pub use registry::{leaderboard_rank, LeaderboardField, ModelRecord, Registry, RegistryError, STUB_ENDPOINT};
pub use stub::{fnv1a64, mode_tag, stub_encode, stub_query, StubEncoder, StubGenerator, STUB_QUERY_TOKENS};
