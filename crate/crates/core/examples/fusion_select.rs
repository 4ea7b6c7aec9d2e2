//! Reciprocal rank fusion of three runs, pseudo-judgments, and the fusion
//! score of each run; then meta-evaluation against known effectiveness.
//!
//! cargo run -p dq-core --example fusion_select

use std::collections::BTreeMap;

use dq_core::fusion::{
    delta_best, fusion_method_score, kendall_tau, order_by_value, pseudo_qrels_from_fused, rrf_fuse, RRF_C,
};
use dq_core::method::rank_scores;
use dq_core::{Direction, Method, Run, RunEntry};

fn run(model: &str, lists: &[(&str, &[&str])]) -> Run {
    let mut r = Run::new(model);
    for (q, docs) in lists {
        let entries = docs
            .iter()
            .enumerate()
            .map(|(i, d)| RunEntry {
                doc_id: d.to_string(),
                score: 1.0 - i as f64 * 0.1,
                rank: i as u32 + 1,
            })
            .collect();
        r.queries.insert(q.to_string(), entries);
    }
    r
}

fn main() {
    let runs = [
        run("alpha", &[("q1", &["a", "b", "c", "d"]), ("q2", &["x", "y", "z"])]),
        run("beta", &[("q1", &["a", "c", "b", "e"]), ("q2", &["x", "z", "y"])]),
        run("gamma", &[("q1", &["e", "d", "a", "f"]), ("q2", &["w", "v", "x"])]),
    ];
    let fused = rrf_fuse(&runs, RRF_C).unwrap();
    for (q, docs) in &fused.queries {
        let shown: Vec<String> = docs.iter().map(|(d, s)| format!("{d}:{s:.5}")).collect();
        println!("fused {q}: {}", shown.join(" "));
    }
    let pseudo = pseudo_qrels_from_fused(&fused, 10);
    let scores: Vec<_> = runs.iter().map(|r| fusion_method_score(r, &pseudo)).collect();
    let result = rank_scores(Method::Fusion, Direction::HigherIsBetter, &scores);
    print!("{}", result.to_table());

    let truth = BTreeMap::from([
        ("alpha".to_string(), 0.52),
        ("beta".to_string(), 0.55),
        ("gamma".to_string(), 0.31),
    ]);
    let true_order = order_by_value(&truth);
    let tau = kendall_tau(
        &result.model_order(),
        &true_order.iter().map(String::as_str).collect::<Vec<_>>(),
    )
    .unwrap();
    let drop = delta_best(&truth, result.best().unwrap()).unwrap();
    println!("kendall tau vs truth: {tau:.4}; delta-best of the selected model: {drop:.2}%");
}
