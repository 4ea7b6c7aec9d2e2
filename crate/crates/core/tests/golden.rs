//! Checked-in fixtures: hashing-encoder golden vectors and the single-vector DQV1 file.

use std::path::PathBuf;

use dq_core::embeddings::{self, read_embeddings, write_embeddings, EmbeddingError};
use dq_core::models::stub_encode;
use dq_core::EmbeddingMatrix;
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[derive(Deserialize)]
struct GoldenCase {
    model_id: String,
    mode_tag: String,
    text: String,
    dim: usize,
    f32_le_hex: Vec<String>,
}

fn f32_from_hex(h: &str) -> f32 {
    let mut bytes = [0u8; 4];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = u8::from_str_radix(&h[2 * i..2 * i + 2], 16).unwrap();
    }
    f32::from_le_bytes(bytes)
}

#[test]
fn stub_vectors_match_golden_fixture_bit_exactly() {
    let cases: Vec<GoldenCase> =
        serde_json::from_str(&std::fs::read_to_string(fixture("stub_golden.json")).unwrap()).unwrap();
    assert!(cases.len() >= 10);
    for c in &cases {
        let got = stub_encode(&c.model_id, &c.mode_tag, &c.text, c.dim);
        let want: Vec<f32> = c.f32_le_hex.iter().map(|h| f32_from_hex(h)).collect();
        let got_bits: Vec<u32> = got.iter().map(|x| x.to_bits()).collect();
        let want_bits: Vec<u32> = want.iter().map(|x| x.to_bits()).collect();
        assert_eq!(
            got_bits, want_bits,
            "{:?} / {:?} / {:?}",
            c.model_id, c.mode_tag, c.text
        );
    }
}

#[test]
fn single_vector_dqv1_fixture_matches_layout() {
    let bytes = std::fs::read(fixture("single.dqv")).unwrap();
    assert_eq!(bytes.len(), 16 + 4 + 8);

    let m = EmbeddingMatrix::from_rows("single", 2, vec![("d1".to_string(), vec![1.0, 0.0])]).unwrap();
    let mut written = Vec::new();
    write_embeddings(&m, &mut written).unwrap();
    assert_eq!(written, bytes);

    let read = embeddings::load(&fixture("single.dqv")).unwrap();
    assert_eq!(read, m);
}

#[test]
fn corrupted_fixture_is_rejected() {
    let bytes = std::fs::read(fixture("single.dqv")).unwrap();
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"XXXX");
    assert!(matches!(
        read_embeddings(&bad[..], "m"),
        Err(EmbeddingError::BadMagic(_))
    ));
    for cut in [3, 8, 15, 17, 21, 27] {
        assert!(
            matches!(read_embeddings(&bytes[..cut], "m"), Err(EmbeddingError::TruncatedFile)),
            "cut at {cut}"
        );
    }
}
