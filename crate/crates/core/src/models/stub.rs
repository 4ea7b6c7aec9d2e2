//! Offline stand-ins for neural encoders and query generators.
//!
//! The hashing encoder is normative: vectors are a pure function of
//! `(model_id, mode_tag, text, dim)` and are bit-identical across platforms.

use crate::corpus::Document;

use super::client::{ClientError, Encoder, Generator};
use super::protocol::EncodeMode;
use super::registry::ModelRecord;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Maximum number of tokens the stub generator copies from a document.
pub const STUB_QUERY_TOKENS: usize = 8;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// `""` for symmetric models, `"q"`/`"d"` when the record is asymmetric.
pub fn mode_tag(record: &ModelRecord, mode: EncodeMode) -> &'static str {
    match (record.asymmetric, mode) {
        (false, _) => "",
        (true, EncodeMode::Query) => "q",
        (true, EncodeMode::Document) => "d",
    }
}

/// Signed feature hashing of lowercase whitespace tokens, L2-normalized.
///
/// Each token adds ±1 at index `(h >> 1) mod dim`, where `h` is FNV-1a 64 of
/// `model_id:mode_tag:token` and bit 0 of `h` picks the sign. Texts that hash to
/// the zero vector (including the empty string) map to `e₀`.
pub fn stub_encode(model_id: &str, mode_tag: &str, text: &str, dim: usize) -> Vec<f32> {
    assert!(dim > 0, "dim must be positive");
    let mut acc = vec![0f64; dim];
    let prefix = format!("{model_id}:{mode_tag}:");
    for token in text.split_whitespace() {
        let key = format!("{prefix}{}", token.to_lowercase());
        let h = fnv1a64(key.as_bytes());
        let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
        acc[((h >> 1) % dim as u64) as usize] += sign;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e0 = vec![0f32; dim];
        e0[0] = 1.0;
        return e0;
    }
    acc.into_iter().map(|x| (x / norm) as f32).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubEncoder;

impl Encoder for StubEncoder {
    fn encode(&self, model: &ModelRecord, mode: EncodeMode, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let tag = mode_tag(model, mode);
        Ok(texts
            .iter()
            .map(|t| stub_encode(&model.model_id, tag, t, model.dim))
            .collect())
    }
}

/// Copies the leading tokens of a document; the i-th query (i > 1) gets a ` #i` suffix.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubGenerator;

pub fn stub_query(doc: &Document) -> Option<String> {
    let input = doc.encoder_input();
    let tokens: Vec<&str> = input.split_whitespace().take(STUB_QUERY_TOKENS).collect();
    (!tokens.is_empty()).then(|| tokens.join(" "))
}

impl Generator for StubGenerator {
    fn generate(&self, doc: &Document, n: usize) -> Result<Vec<String>, ClientError> {
        let base = stub_query(doc).ok_or(ClientError::EmptyGeneration)?;
        Ok((1..=n)
            .map(|i| if i == 1 { base.clone() } else { format!("{base} #{i}") })
            .collect())
    }
}
