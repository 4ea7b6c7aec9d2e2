//! Pseudo-query evaluation: generated queries keyed to their source document
//! serve as judgments for each model.
//!
//! cargo run -p dq-core --example larmor

use std::collections::BTreeMap;

use dq_core::models::{encode, encode_corpus, EncodeMode, ModelRecord, StubEncoder, StubGenerator};
use dq_core::perturbation::{build_pseudo_queries, larmor_score, sample_docs};
use dq_core::retrieval::batch_search;
use dq_core::{Document, Similarity};

fn main() {
    let corpus: Vec<Document> = (0..200)
        .map(|i| {
            Document::new(
                format!("d{i:03}"),
                format!("topic {}", i % 17),
                format!("entry {i} about item {} and {}", i * 7 % 31, i * 13 % 29),
            )
        })
        .collect();
    let sampled = sample_docs(&corpus, 20, 7);
    let pseudo = build_pseudo_queries(&StubGenerator, &sampled, 2).unwrap();
    println!(
        "{} pseudo-queries, e.g. {:?} -> {}",
        pseudo.len(),
        pseudo[0].text,
        pseudo[0].source_doc_id
    );

    for (model, dim) in [("stub-8", 8), ("stub-64", 64), ("stub-512", 512)] {
        let record = ModelRecord::stub(model, dim, Similarity::Cosine);
        let matrix = encode_corpus(&StubEncoder, &record, &corpus, 64, |_, _| {}).unwrap();
        let texts: Vec<String> = pseudo.iter().map(|p| p.text.clone()).collect();
        let vectors = encode(&StubEncoder, &record, EncodeMode::Query, &texts).unwrap();
        let queries: BTreeMap<String, Vec<f32>> = pseudo.iter().map(|p| p.id.clone()).zip(vectors).collect();
        let run = batch_search(&matrix, &queries, 100, record.sim).unwrap();
        println!("{model:<10} {:.4}", larmor_score(model, &pseudo, &run).unwrap().value);
    }
}
