//! Exact top-k search over a small matrix, written out as a TREC run.
//!
//! cargo run -p dq-core --example retrieval_topk

use std::collections::BTreeMap;

use dq_core::retrieval::{batch_search, write_trec_run};
use dq_core::{EmbeddingMatrix, Similarity};

fn main() {
    let docs = EmbeddingMatrix::from_rows(
        "toy",
        3,
        [
            ("d1".to_string(), vec![1.0, 0.0, 0.0]),
            ("d2".to_string(), vec![0.7, 0.7, 0.0]),
            ("d3".to_string(), vec![0.0, 0.0, 1.0]),
            ("d4".to_string(), vec![0.7, 0.7, 0.0]),
        ],
    )
    .unwrap();
    let queries = BTreeMap::from([
        ("q1".to_string(), vec![1.0, 0.2, 0.0]),
        ("q2".to_string(), vec![0.0, 0.1, 0.9]),
    ]);
    for sim in [Similarity::Dot, Similarity::Cosine] {
        println!("# {sim}");
        let run = batch_search(&docs, &queries, 3, sim).unwrap();
        write_trec_run(&run, std::io::stdout()).unwrap();
    }
}
