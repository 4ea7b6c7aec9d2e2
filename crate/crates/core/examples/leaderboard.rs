//! Leaderboard ranking from registry data, and the model bundle archive.
//!
//! cargo run -p dq-core --example leaderboard

use dq_core::models::{build_bundle, leaderboard_rank, LeaderboardField, Registry};

const REGISTRY: &str = r#"
[[model]]
model_id = "contriever-like"
dim = 768
sim = "dot"
msmarco_ndcg10 = 0.41

[[model]]
model_id = "e5-like"
dim = 768
sim = "cosine"
msmarco_ndcg10 = 0.44
mteb_avg = 50.1

[[model]]
model_id = "unpublished"
dim = 384
sim = "cosine"
description = "no leaderboard entry"
"#;

fn main() {
    let registry = Registry::from_toml_str(REGISTRY).unwrap();
    for field in [LeaderboardField::MsmarcoNdcg10, LeaderboardField::MtebAvg] {
        print!("{}", leaderboard_rank(&registry, field).unwrap().to_table());
    }
    let top = registry.get("e5-like").unwrap();
    let bundle = build_bundle(top).unwrap();
    println!("bundle for {}: {} bytes", top.model_id, bundle.len());
}
