//! Downloadable model bundle: a zip archive with a model card, usage notes, and
//! an adapter skeleton implementing the `encode_queries` / `encode_corpus` contract.

use std::io::{Cursor, Write};

use zip::write::SimpleFileOptions;
use zip::ZipWriter;

use super::registry::ModelRecord;

pub const MODEL_CARD: &str = "MODEL_CARD.md";
pub const ADAPTER_SKELETON: &str = "adapter_skeleton.txt";
pub const USAGE: &str = "USAGE.md";
pub const BUNDLE_FILES: [&str; 3] = [MODEL_CARD, ADAPTER_SKELETON, USAGE];

fn model_card(m: &ModelRecord) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "not published".to_string(), |x| format!("{x}"));
    let mut s = format!("# {}\n\n", m.model_id);
    if !m.description.is_empty() {
        s.push_str(&m.description);
        s.push_str("\n\n");
    }
    s.push_str("| field | value |\n|---|---|\n");
    s.push_str(&format!("| embedding dimension | {} |\n", m.dim));
    s.push_str(&format!("| score function | {} |\n", m.sim));
    s.push_str(&format!(
        "| query/document towers | {} |\n",
        if m.asymmetric { "separate" } else { "shared" }
    ));
    s.push_str(&format!("| encoder endpoint | {} |\n", m.encoder_endpoint));
    s.push_str(&format!("| MS MARCO nDCG@10 | {} |\n", fmt_opt(m.msmarco_ndcg10)));
    s.push_str(&format!("| MTEB retrieval average | {} |\n", fmt_opt(m.mteb_avg)));
    match &m.bundle_path {
        Some(p) => s.push_str(&format!("\nCheckpoint location: `{}`\n", p.display())),
        None => s.push_str("\nNo checkpoint is distributed with this bundle.\n"),
    }
    s
}

fn adapter_skeleton(m: &ModelRecord) -> String {
    let class = m
        .model_id
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|p| !p.is_empty())
        .map(|p| {
            let mut cs = p.chars();
            cs.next()
                .map(|c| c.to_ascii_uppercase().to_string() + cs.as_str())
                .unwrap_or_default()
        })
        .collect::<String>();
    let score = match m.sim {
        crate::retrieval::Similarity::Dot => "dot",
        crate::retrieval::Similarity::Cosine => "cos_sim",
    };
    format!(
        r#"from typing import Dict, List

import numpy as np


class CustomDEModel:
    def __init__(self, **kwargs):
        self.query_encoder, self.doc_encoder = None, None
        self.score_function = None

    def encode_queries(self, queries: List[str], batch_size: int, **kwargs) -> np.ndarray:
        pass

    def encode_corpus(self, corpus: List[Dict[str, str]], batch_size: int, **kwargs) -> np.ndarray:
        pass


class {class}Model(CustomDEModel):
    """Adapter for `{id}` ({dim}-dimensional vectors, {sim} scoring)."""

    def __init__(self, checkpoint_dir: str, **kwargs):
        super().__init__(**kwargs)
        self.score_function = "{score}"
        # load the query and document towers from checkpoint_dir here
        self.query_encoder = None
        self.doc_encoder = {doc_encoder}

    def encode_queries(self, queries: List[str], batch_size: int = 64, **kwargs) -> np.ndarray:
        # return an array of shape (len(queries), {dim})
        raise NotImplementedError

    def encode_corpus(self, corpus: List[Dict[str, str]], batch_size: int = 64, **kwargs) -> np.ndarray:
        # each item has "title" and "text"; encode (title + " " + text).strip()
        # return an array of shape (len(corpus), {dim})
        raise NotImplementedError
"#,
        id = m.model_id,
        dim = m.dim,
        sim = m.sim,
        doc_encoder = if m.asymmetric { "None" } else { "self.query_encoder" },
    )
}

fn usage(m: &ModelRecord) -> String {
    format!(
        "# Using {id}\n\n\
         1. Place the checkpoint next to `adapter_skeleton.txt` and save the skeleton as `adapter.py`.\n\
         2. Fill in the checkpoint loading in `__init__` and the two encode functions.\n\
         3. Encode documents with `encode_corpus` using the input `title + \" \" + text` (trimmed).\n\
         4. Encode queries with `encode_queries` and rank documents by {sim} similarity.\n\n\
         Both functions must return one {dim}-dimensional row per input, in input order.\n\n\
         To serve the model to the selection service, expose `POST /encode` accepting\n\
         `{{\"model_id\": \"{id}\", \"mode\": \"query\" | \"document\", \"texts\": [...]}}` and answering\n\
         `{{\"vectors\": [[...], ...]}}`, then point `encoder_endpoint` in the registry at it.\n",
        id = m.model_id,
        dim = m.dim,
        sim = m.sim,
    )
}

/// Builds the bundle archive in memory.
pub fn build_bundle(model: &ModelRecord) -> zip::result::ZipResult<Vec<u8>> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    for (name, body) in [
        (MODEL_CARD, model_card(model)),
        (ADAPTER_SKELETON, adapter_skeleton(model)),
        (USAGE, usage(model)),
    ] {
        zip.start_file(name, options)?;
        zip.write_all(body.as_bytes())?;
    }
    Ok(zip.finish()?.into_inner())
}
