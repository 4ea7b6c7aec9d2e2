//! A synthetic collection with a planted best model, for end-to-end checks of
//! the selection methods where the right answer is known in advance.
//!
//! Documents are random unit vectors. Every query has exactly one relevant
//! document. The first model encodes a query as its relevant document's vector
//! plus isotropic Gaussian noise. Every other model works in its own seeded
//! random rotation of the space and additionally turns the noisy query vector
//! by a fixed angle towards a seeded random direction, so larger angles give
//! weaker models. The pool's encoder resolves texts through lookup tables, so
//! pseudo-queries produced by [`StubGenerator`](crate::models::StubGenerator)
//! from a document map back to that document.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Collection, Document, Qrels, Query};
use crate::embeddings::EmbeddingMatrix;
use crate::fusion;
use crate::models::{
    fnv1a64, stub_encode, stub_query, ClientError, Clients, EncodeMode, Encoder, ModelRecord, Registry,
};
use crate::retrieval::{SearchIndex, Similarity};

/// Registry endpoint name under which [`PlantedPool::clients`] registers the encoder.
pub const PLANTED_ENDPOINT: &str = "planted";

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n_docs: usize,
    pub dim: usize,
    pub n_queries: usize,
    /// Standard deviation of the per-component query noise.
    pub noise: f64,
    /// One entry per model, in degrees; 0 is the planted best model.
    pub angles_deg: Vec<f64>,
    pub doc_tokens: usize,
    pub vocab: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_docs: 1000,
            dim: 32,
            n_queries: 50,
            noise: 0.05,
            angles_deg: vec![0.0, 55.0, 65.0, 75.0],
            doc_tokens: 12,
            vocab: 20_000,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

pub fn model_id(i: usize) -> String {
    format!("model-{}", (b'a' + i as u8) as char)
}

struct PlantedModel {
    rotation: Vec<f64>,
    direction: Vec<f64>,
    angle: f64,
}

/// Encoder for a planted pool; see the module docs.
pub struct PlantedEncoder {
    dim: usize,
    noise: f64,
    seed: u64,
    base: Vec<Vec<f64>>,
    doc_index: HashMap<String, usize>,
    query_target: HashMap<String, usize>,
    models: HashMap<String, PlantedModel>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Row-major random orthogonal matrix: Gram-Schmidt over Gaussian rows.
fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v = gaussian(rng, dim);
        for r in &rows {
            let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows.concat()
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    m.chunks_exact(v.len())
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Drops a trailing ` #<n>` added to repeated pseudo-queries.
fn strip_counter(text: &str) -> &str {
    match text.rsplit_once(" #") {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => text,
    }
}

impl PlantedEncoder {
    fn query_vector(&self, model: &PlantedModel, target: usize, text: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(text.as_bytes()));
        let noisy: Vec<f64> = self.base[target]
            .iter()
            .zip(gaussian(&mut rng, self.dim))
            .map(|(b, n)| b + self.noise * n)
            .collect();
        let turned = if model.angle == 0.0 {
            noisy
        } else {
            let len = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut u = mat_vec(&model.direction, &noisy);
            let along: f64 = u.iter().zip(&noisy).map(|(a, b)| a * b).sum::<f64>() / (len * len);
            u.iter_mut().zip(&noisy).for_each(|(a, b)| *a -= along * b);
            let u = unit(u);
            noisy
                .iter()
                .zip(&u)
                .map(|(v, w)| model.angle.cos() * v + model.angle.sin() * len * w)
                .collect()
        };
        mat_vec(&model.rotation, &turned)
    }
}

impl Encoder for PlantedEncoder {
    fn encode(&self, record: &ModelRecord, mode: EncodeMode, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let model = self
            .models
            .get(&record.model_id)
            .ok_or_else(|| ClientError::InvalidResponse(format!("planted pool has no model {:?}", record.model_id)))?;
        Ok(texts
            .iter()
            .map(|text| {
                let known = match mode {
                    EncodeMode::Document => self
                        .doc_index
                        .get(text.as_str())
                        .map(|&i| mat_vec(&model.rotation, &self.base[i])),
                    EncodeMode::Query => self
                        .query_target
                        .get(strip_counter(text))
                        .map(|&t| self.query_vector(model, t, text)),
                };
                match known {
                    Some(v) => v.into_iter().map(|x| x as f32).collect(),
                    // texts outside the planted tables get an unrelated hashed vector
                    None => stub_encode(&record.model_id, "", text, self.dim),
                }
            })
            .collect())
    }
}

pub struct PlantedPool {
    pub config: PlantedConfig,
    pub collection: Collection,
    pub registry: Registry,
    pub encoder: Arc<PlantedEncoder>,
}

impl PlantedPool {
    pub fn generate(config: PlantedConfig) -> Self {
        assert!(config.angles_deg.len() >= 2 && config.angles_deg.len() <= 26);
        assert!(config.n_queries <= config.n_docs && config.doc_tokens >= 8);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let base: Vec<Vec<f64>> = (0..config.n_docs)
            .map(|_| unit(gaussian(&mut rng, config.dim)))
            .collect();

        let mut prefixes = HashSet::new();
        let mut corpus = Vec::with_capacity(config.n_docs);
        while corpus.len() < config.n_docs {
            let tokens: Vec<String> = (0..config.doc_tokens)
                .map(|_| format!("w{}", rng.gen_range(0..config.vocab)))
                .collect();
            if !prefixes.insert(tokens[..8].join(" ")) {
                continue;
            }
            corpus.push(Document::new(format!("doc{:05}", corpus.len()), "", tokens.join(" ")));
        }

        let mut query_target = HashMap::new();
        for (i, doc) in corpus.iter().enumerate() {
            query_target.insert(stub_query(doc).expect("non-empty document"), i);
        }
        let mut relevant = index::sample(&mut rng, config.n_docs, config.n_queries).into_vec();
        relevant.sort_unstable();
        let mut queries = Vec::with_capacity(config.n_queries);
        let mut qrels = Qrels::new();
        for (j, &target) in relevant.iter().enumerate() {
            let tokens: Vec<&str> = corpus[target].text.split_whitespace().collect();
            let text = tokens[tokens.len() - 6..].join(" ");
            let id = format!("q{j:03}");
            query_target.insert(text.clone(), target);
            qrels.insert(id.clone(), corpus[target].id.clone(), 1);
            queries.push(Query::new(id, text));
        }

        let mut models = HashMap::new();
        let mut records = Vec::new();
        for (i, &angle) in config.angles_deg.iter().enumerate() {
            let mut model_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1000).wrapping_add(i as u64 + 1));
            let identity = {
                let mut m = vec![0.0; config.dim * config.dim];
                (0..config.dim).for_each(|k| m[k * config.dim + k] = 1.0);
                m
            };
            let rotation = if i == 0 {
                identity
            } else {
                random_orthogonal(&mut model_rng, config.dim)
            };
            let direction = random_orthogonal(&mut model_rng, config.dim);
            let id = model_id(i);
            models.insert(
                id.clone(),
                PlantedModel {
                    rotation,
                    direction,
                    angle: angle.to_radians(),
                },
            );
            records.push(ModelRecord {
                encoder_endpoint: PLANTED_ENDPOINT.to_string(),
                description: format!("planted model, query turned by {angle}°"),
                ..ModelRecord::stub(id, config.dim, Similarity::Dot)
            });
        }

        let doc_index = corpus.iter().enumerate().map(|(i, d)| (d.encoder_input(), i)).collect();
        let encoder = PlantedEncoder {
            dim: config.dim,
            noise: config.noise,
            seed: config.seed,
            base,
            doc_index,
            query_target,
            models,
        };
        Self {
            collection: Collection {
                corpus,
                queries: Some(queries),
                qrels: Some(qrels),
            },
            registry: Registry::new(records).expect("planted registry"),
            encoder: Arc::new(encoder),
            config,
        }
    }

    /// The model constructed to be best.
    pub fn planted_best(&self) -> String {
        model_id(0)
    }

    /// Stub generator plus the planted encoder under [`PLANTED_ENDPOINT`].
    pub fn clients(&self) -> Clients {
        Clients::new().register_encoder(PLANTED_ENDPOINT, self.encoder.clone())
    }

    /// Mean nDCG@10 of every model against the planted judgments.
    pub fn true_ndcg(&self, embeddings: &BTreeMap<String, EmbeddingMatrix>, k: usize) -> BTreeMap<String, f64> {
        let queries = self.collection.queries.as_deref().unwrap_or_default();
        let qrels = self.collection.qrels.as_ref().expect("planted qrels");
        let texts: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
        self.registry
            .iter()
            .map(|m| {
                let vectors = self
                    .encoder
                    .encode(m, EncodeMode::Query, &texts)
                    .expect("planted encode");
                let qv: BTreeMap<String, Vec<f32>> = queries.iter().map(|q| q.id.clone()).zip(vectors).collect();
                let run = SearchIndex::new(&embeddings[&m.model_id], m.sim)
                    .batch_search(&qv, k)
                    .expect("planted search");
                (m.model_id.clone(), fusion::mean_ndcg(&run, qrels, fusion::NDCG_CUTOFF))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{encode, Generator, StubGenerator};

    fn small() -> PlantedPool {
        PlantedPool::generate(PlantedConfig {
            n_docs: 200,
            n_queries: 10,
            ..PlantedConfig::with_seed(3)
        })
    }

    #[test]
    fn deterministic_and_batch_invariant() {
        let a = small();
        let b = small();
        assert_eq!(a.collection.corpus, b.collection.corpus);
        let m = a.registry.get("model-b").unwrap();
        let texts: Vec<String> = a
            .collection
            .queries
            .as_ref()
            .unwrap()
            .iter()
            .map(|q| q.text.clone())
            .collect();
        let batch = encode(a.encoder.as_ref(), m, EncodeMode::Query, &texts).unwrap();
        for (t, v) in texts.iter().zip(&batch) {
            let one = b.encoder.encode(m, EncodeMode::Query, std::slice::from_ref(t)).unwrap();
            assert_eq!(&one[0], v);
        }
    }

    #[test]
    fn rotations_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 8;
        let m = random_orthogonal(&mut rng, dim);
        for i in 0..dim {
            for j in 0..dim {
                let d: f64 = (0..dim).map(|k| m[i * dim + k] * m[j * dim + k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_queries_map_to_their_source() {
        let pool = small();
        let doc = &pool.collection.corpus[17];
        let m = pool.registry.get("model-a").unwrap();
        let q = StubGenerator.generate(doc, 2).unwrap();
        let qv = pool.encoder.encode(m, EncodeMode::Query, &q).unwrap();
        let dv = pool
            .encoder
            .encode(m, EncodeMode::Document, &[doc.encoder_input()])
            .unwrap();
        for v in &qv {
            let cos = crate::retrieval::cosine(v, &dv[0]);
            assert!(cos > 0.9, "cos {cos}");
        }
        assert_eq!(strip_counter("w1 w2 #12"), "w1 w2");
        assert_eq!(strip_counter("w1 #x"), "w1 #x");
    }
}
