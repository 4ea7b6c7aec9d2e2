//! Query alteration with stub models: term-masked variants and the
//! resulting score variability per model.
//!
//! cargo run -p dq-core --example query_alteration

use std::collections::BTreeMap;

use dq_core::models::{encode_corpus, Clients, ModelRecord, Registry, StubEncoder};
use dq_core::perturbation::mask_variants;
use dq_core::selection::{run_method, SelectionInput, SelectionParams};
use dq_core::{Document, Method, Query, Similarity};

fn main() {
    let corpus: Vec<Document> = [
        "heart disease risk factors include smoking",
        "smoking raises the risk of lung cancer",
        "regular exercise lowers heart disease risk",
        "diet and exercise in diabetes care",
        "covid transmission in enclosed spaces",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Document::new(format!("d{i}"), "", *t))
    .collect();
    let queries = vec![
        Query::new("q1", "heart disease risk"),
        Query::new("q2", "lung cancer smoking"),
    ];
    for v in mask_variants(&queries[0], 16, 7) {
        println!("variant of q1 dropping token {}: {:?}", v.dropped_term_index, v.text);
    }

    let registry = Registry::new([
        ModelRecord::stub("stub-small", 16, Similarity::Cosine),
        ModelRecord::stub("stub-large", 128, Similarity::Cosine),
    ])
    .unwrap();
    let embeddings: BTreeMap<_, _> = registry
        .iter()
        .map(|m| {
            (
                m.model_id.clone(),
                encode_corpus(&StubEncoder, m, &corpus, 64, |_, _| {}).unwrap(),
            )
        })
        .collect();
    let clients = Clients::new();
    let input = SelectionInput {
        corpus: &corpus,
        queries: Some(&queries),
        registry: &registry,
        embeddings: &embeddings,
        clients: &clients,
    };
    let result = run_method(&input, Method::QueryAlteration, &SelectionParams::default(), |_, _| {}).unwrap();
    print!("{}", result.to_table());
}
