//! Encodes a BEIR-style collection with a stub model and round-trips the
//! DQV1 embedding file.
//!
//! cargo run -p dq-core --example embeddings_io

use dq_core::embeddings;
use dq_core::models::{encode_corpus, ModelRecord, StubEncoder};
use dq_core::{Collection, Similarity};

const CORPUS: &str = r#"{"_id":"d1","title":"Heart","text":"heart disease risk factors"}
{"_id":"d2","title":"","text":"lung cancer and smoking"}
{"_id":"d3","title":"Exercise","text":"benefits of regular exercise"}
"#;

fn main() {
    let dir = std::env::temp_dir().join(format!("dq-embeddings-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("corpus.jsonl"), CORPUS).unwrap();
    let collection = Collection::load_dir(&dir).unwrap();

    let model = ModelRecord::stub("stub-mini", 8, Similarity::Cosine);
    let matrix = encode_corpus(&StubEncoder, &model, &collection.corpus, 2, |done, total| {
        println!("encoded {done}/{total}");
    })
    .unwrap();
    let path = embeddings::path_for(&dir, &model.model_id);
    embeddings::save(&matrix, &path).unwrap();
    let back = embeddings::load(&path).unwrap();
    println!(
        "{} -> {} bytes, equal after reload: {}",
        path.display(),
        std::fs::metadata(&path).unwrap().len(),
        back == matrix
    );
    for (id, row) in back.rows() {
        println!("{id}: {row:?}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
