//! Builds the planted pool for a handful of seeds and reports which model each
//! method selects next to the true ranking.
//!
//! cargo run --release -p dq-core --example planted_pool -- [n_seeds]

use std::collections::BTreeMap;

use dq_core::fusion::{kendall_tau, order_by_value};
use dq_core::models::{encode_corpus, Encoder};
use dq_core::selection::{run_method, SelectionInput, SelectionParams};
use dq_core::synthetic::{PlantedConfig, PlantedPool};
use dq_core::{EmbeddingMatrix, Method};

fn main() {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let methods = [Method::BinaryEntropy, Method::Fusion, Method::Larmor];
    for seed in 0..n_seeds {
        let pool = PlantedPool::generate(PlantedConfig::with_seed(seed));
        let clients = pool.clients();
        let mut embeddings = BTreeMap::<String, EmbeddingMatrix>::new();
        for m in pool.registry.iter() {
            let enc: &dyn Encoder = pool.encoder.as_ref();
            let matrix = encode_corpus(enc, m, &pool.collection.corpus, 256, |_, _| {}).unwrap();
            embeddings.insert(m.model_id.clone(), matrix);
        }
        let truth = pool.true_ndcg(&embeddings, 100);
        let true_order = order_by_value(&truth);
        let input = SelectionInput {
            corpus: &pool.collection.corpus,
            queries: pool.collection.queries.as_deref(),
            registry: &pool.registry,
            embeddings: &embeddings,
            clients: &clients,
        };
        let params = SelectionParams {
            seed,
            ..SelectionParams::default()
        };
        print!("seed {seed}: truth");
        for id in &true_order {
            print!(" {id}={:.3}", truth[id]);
        }
        println!();
        for method in methods {
            let result = run_method(&input, method, &params, |_, _| {}).unwrap();
            let order = result.model_order();
            let tau = kendall_tau(&order, &true_order.iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
            let values: Vec<String> = result
                .ranked
                .iter()
                .map(|r| format!("{}={:.4}", r.model_id, r.value.unwrap_or(f64::NAN)))
                .collect();
            println!(
                "  {:<16} best={} tau={tau:+.3}  {}",
                method.name(),
                result.best().unwrap(),
                values.join(" ")
            );
        }
    }
}
