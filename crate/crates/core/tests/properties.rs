use std::collections::BTreeMap;

use proptest::prelude::*;

use dq_core::corpus::{parse_corpus, parse_queries, write_corpus, write_queries};
use dq_core::embeddings::{read_embeddings, write_embeddings};
use dq_core::fusion::{fusion_method_score, kendall_tau, ndcg_at_k, pseudo_qrels_from_fused, rrf_fuse, RRF_C};
use dq_core::method::rank_scores;
use dq_core::models::{encode, leaderboard_rank, EncodeMode, LeaderboardField, ModelRecord, Registry, StubEncoder};
use dq_core::perturbation::{alteration_query_value, larmor_score, mask_variants, PseudoQuery};
use dq_core::qpp::{self, QueryScoreList};
use dq_core::retrieval::{batch_search, cosine, dot, rank_order, top_k, write_trec_run};
use dq_core::{Direction, Document, EmbeddingMatrix, Method, MethodScore, Query, Run, RunEntry, Similarity};

fn matrix_strategy(max_n: usize, max_dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    (1..=max_n, 1..=max_dim).prop_flat_map(|(n, dim)| {
        // small integer grid so exact ties are common
        prop::collection::vec(-3i8..=3, n * dim).prop_map(move |vals| {
            let ids = (0..n).map(|i| format!("d{:03}", (i * 7919) % 1000)).collect();
            EmbeddingMatrix::new("m", dim, ids, vals.into_iter().map(f32::from).collect()).unwrap()
        })
    })
}

fn descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn score_list() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..40).prop_map(descending)
}

fn run_from(model: &str, lists: &BTreeMap<String, Vec<String>>) -> Run {
    let mut run = Run::new(model);
    for (q, docs) in lists {
        run.queries.insert(
            q.clone(),
            docs.iter()
                .enumerate()
                .map(|(i, d)| RunEntry {
                    doc_id: d.clone(),
                    score: 1.0 / (i + 1) as f64,
                    rank: i as u32 + 1,
                })
                .collect(),
        );
    }
    run
}

fn permuted_docs(seed: Vec<u32>, pool: usize) -> Vec<String> {
    let mut docs: Vec<(u32, String)> = seed
        .into_iter()
        .zip(0..pool)
        .map(|(k, i)| (k, format!("d{i}")))
        .collect();
    docs.sort();
    docs.into_iter().map(|(_, d)| d).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_equals_full_sort(m in matrix_strategy(60, 12), k_frac in 0.0f64..1.5, q in prop::collection::vec(-3i8..=3, 12)) {
        let q: Vec<f32> = q[..m.dim()].iter().map(|&x| f32::from(x)).collect();
        let k = ((m.len() as f64 * k_frac) as usize).max(1);
        for sim in [Similarity::Dot, Similarity::Cosine] {
            let got = top_k(&m, &q, k, sim).unwrap();
            let mut all: Vec<(f64, &str)> = m.rows().map(|(id, row)| {
                let s = match sim {
                    Similarity::Dot => dot(&q, row),
                    Similarity::Cosine => cosine(&q, row),
                };
                (s, id)
            }).collect();
            all.sort_by(|a, b| rank_order(a.0, a.1, b.0, b.1));
            all.truncate(k);
            prop_assert_eq!(got.len(), all.len());
            for (i, (e, (s, id))) in got.iter().zip(&all).enumerate() {
                prop_assert_eq!(&e.doc_id, id);
                prop_assert_eq!(e.rank as usize, i + 1);
                prop_assert_eq!(e.score, *s);
            }
        }
    }

    #[test]
    fn cosine_is_dot_of_normalized(a in prop::collection::vec(-10.0f32..10.0, 1..32), b_seed in prop::collection::vec(-10.0f32..10.0, 32)) {
        let b = &b_seed[..a.len()];
        let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        prop_assume!(na > 1e-3 && nb > 1e-3);
        let via_norm: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64 / na) * (*y as f64 / nb)).sum();
        prop_assert!((cosine(&a, b) - via_norm).abs() < 1e-9);
    }

    #[test]
    fn parallel_and_sequential_search_give_identical_trec(m in matrix_strategy(40, 8), nq in 1usize..12, k in 1usize..20) {
        let queries: BTreeMap<String, Vec<f32>> = (0..nq)
            .map(|i| (format!("q{i}"), (0..m.dim()).map(|j| ((i * 31 + j * 17) % 7) as f32 - 3.0).collect()))
            .collect();
        let parallel = batch_search(&m, &queries, k, Similarity::Cosine).unwrap();
        let mut sequential = Run::new("m");
        for (qid, v) in &queries {
            sequential.queries.insert(qid.clone(), top_k(&m, v, k, Similarity::Cosine).unwrap());
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_trec_run(&parallel, &mut a).unwrap();
        write_trec_run(&sequential, &mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dqv1_round_trip_is_bit_exact(dim in 1usize..16, bits in prop::collection::vec(any::<u32>(), 0..200)) {
        let n = bits.len() / dim;
        let vectors: Vec<f32> = bits[..n * dim]
            .iter()
            .map(|&b| f32::from_bits(b))
            .map(|x| if x.is_finite() { x } else { -0.0 })
            .collect();
        let ids = (0..n).map(|i| format!("doc-{i}-é")).collect();
        let m = EmbeddingMatrix::new("m", dim, ids, vectors).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&m, &mut buf).unwrap();
        let back = read_embeddings(&buf[..], "m").unwrap();
        let bits_a: Vec<u32> = m.as_slice().iter().map(|x| x.to_bits()).collect();
        let bits_b: Vec<u32> = back.as_slice().iter().map(|x| x.to_bits()).collect();
        prop_assert_eq!(bits_a, bits_b);
        prop_assert_eq!(m.doc_ids(), back.doc_ids());
    }

    #[test]
    fn corpus_and_queries_round_trip(texts in prop::collection::vec(("[a-zA-Z0-9 \"\\\\é\t]{0,20}", "[a-z][a-z \"\\n]{0,29}"), 1..20)) {
        let docs: Vec<Document> = texts.iter().enumerate().map(|(i, (t, x))| Document::new(format!("d{i}"), t.clone(), x.clone())).collect();
        let mut buf = Vec::new();
        write_corpus(&docs, &mut buf).unwrap();
        prop_assert_eq!(parse_corpus(&buf[..]).unwrap(), docs);

        let queries: Vec<Query> = texts.iter().enumerate().map(|(i, (_, x))| Query::new(format!("q{i}"), x.clone())).collect();
        let mut buf = Vec::new();
        write_queries(&queries, &mut buf).unwrap();
        prop_assert_eq!(parse_queries(&buf[..]).unwrap(), queries);
    }

    #[test]
    fn nqc_invariant_wig_and_sigma_scale(scores in score_list(), mu in -20.0f64..20.0, c in 0.01f64..100.0) {
        prop_assume!(mu.abs() > 1e-3);
        let q = QueryScoreList::new("q", scores.clone(), mu).unwrap();
        let scaled = QueryScoreList::new("q", scores.iter().map(|s| s * c).collect(), mu * c).unwrap();
        let tol = |x: f64| 1e-9 * (1.0 + x.abs());
        prop_assert!((qpp::nqc(&scaled) - qpp::nqc(&q)).abs() <= tol(qpp::nqc(&q)));
        prop_assert!((qpp::wig(&scaled) - c * qpp::wig(&q)).abs() <= tol(c * qpp::wig(&q)));
        prop_assert!((qpp::sigma_max(&scaled) - c * qpp::sigma_max(&q)).abs() <= tol(c * qpp::sigma_max(&q)));
    }

    #[test]
    fn sigma_max_dominates_full_std(scores in score_list()) {
        let q = QueryScoreList::new("q", scores.clone(), 1.0).unwrap();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64).sqrt();
        prop_assert!(qpp::sigma_max(&q) >= std - 1e-12);
    }

    #[test]
    fn entropy_in_unit_interval_and_zero_iff_extremes(scores in prop::collection::vec(-3i8..=3, 1..30)) {
        let scores = descending(scores.into_iter().map(f64::from).collect());
        let q = QueryScoreList::new("q", scores.clone(), 0.0).unwrap();
        let h = qpp::binary_entropy(&q);
        prop_assert!((0.0..=1.0).contains(&h));
        let p = qpp::minmax_normalize(&scores).unwrap();
        let extremes = p.iter().all(|&x| x == 0.0 || x == 1.0);
        prop_assert_eq!(h == 0.0, extremes);
    }

    #[test]
    fn estimators_ignore_which_tied_doc_comes_first(scores in prop::collection::vec(-2i8..=2, 1..20), mu in -3.0f64..3.0) {
        // tied scores carry no identity, so any permutation of tied docs yields the same list
        let a = descending(scores.iter().map(|&s| f64::from(s)).collect());
        let b = descending(scores.iter().rev().map(|&s| f64::from(s)).collect());
        let qa = QueryScoreList::new("q", a, mu).unwrap();
        let qb = QueryScoreList::new("q", b, mu).unwrap();
        for m in [Method::Nqc, Method::Smv, Method::Sigma, Method::Wig, Method::BinaryEntropy] {
            let f = qpp::estimator(m).unwrap();
            prop_assert_eq!(f(&qa).to_bits(), f(&qb).to_bits());
        }
    }

    #[test]
    fn aggregate_is_order_invariant(values in prop::collection::vec(-10.0f64..10.0, 1..100), rot in 0usize..100) {
        let a = qpp::aggregate(&values, Method::Nqc, "m").unwrap().value;
        let mut rotated = values.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let b = qpp::aggregate(&rotated, Method::Nqc, "m").unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ranking_is_invariant_under_monotone_transforms(values in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let scores = |f: &dyn Fn(f64) -> f64| -> Vec<MethodScore> {
            values.iter().enumerate().map(|(i, &v)| MethodScore {
                model_id: format!("m{i:02}"),
                method: Method::Nqc,
                value: f(v),
                direction: Direction::HigherIsBetter,
            }).collect()
        };
        for dir in [Direction::HigherIsBetter, Direction::LowerIsBetter] {
            let base = rank_scores(Method::Nqc, dir, &scores(&|v| v));
            let exp = rank_scores(Method::Nqc, dir, &scores(&|v| v.exp()));
            let affine = rank_scores(Method::Nqc, dir, &scores(&|v| 3.0 * v + 1.0));
            let cube = rank_scores(Method::Nqc, dir, &scores(&|v| v.powi(3)));
            prop_assert_eq!(base.model_order(), exp.model_order());
            prop_assert_eq!(base.model_order(), affine.model_order());
            prop_assert_eq!(base.model_order(), cube.model_order());
        }
    }

    #[test]
    fn rrf_ignores_model_order(keys in prop::collection::vec(prop::collection::vec(any::<u32>(), 12), 2..5), depth in 1usize..12) {
        let runs: Vec<Run> = keys.iter().enumerate().map(|(i, k)| {
            let mut docs = permuted_docs(k.clone(), 12);
            docs.truncate(depth + i % 3);
            run_from(&format!("m{i}"), &BTreeMap::from([("q".to_string(), docs)]))
        }).collect();
        let forward = rrf_fuse(&runs, RRF_C).unwrap();
        let mut reversed = runs.clone();
        reversed.reverse();
        prop_assert_eq!(&forward, &rrf_fuse(&reversed, RRF_C).unwrap());
        reversed.rotate_left(1);
        prop_assert_eq!(&forward, &rrf_fuse(&reversed, RRF_C).unwrap());

        let replay = forward.as_run("fused");
        let pseudo = pseudo_qrels_from_fused(&forward, 10);
        prop_assert_eq!(fusion_method_score(&replay, &pseudo).value, 1.0);
    }

    #[test]
    fn ndcg_bounded_and_monotone_under_upward_swap(k in prop::collection::vec(any::<u32>(), 15), grades in prop::collection::vec(0u32..4, 15), i in 0usize..15, j in 0usize..15) {
        let ranking = permuted_docs(k, 15);
        let judgments: BTreeMap<String, u32> = grades.iter().enumerate().map(|(d, &g)| (format!("d{d}"), g)).collect();
        let before = ndcg_at_k(&ranking, Some(&judgments), 10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&before));
        let (hi, lo) = (i.min(j), i.max(j));
        // move the more relevant of the pair upward
        let mut swapped = ranking.clone();
        if judgments[&ranking[lo]] > judgments[&ranking[hi]] {
            swapped.swap(hi, lo);
        }
        prop_assert!(ndcg_at_k(&swapped, Some(&judgments), 10) >= before - 1e-12);
    }

    #[test]
    fn kendall_tau_properties(k in prop::collection::vec(any::<u32>(), 2..15), relabel in any::<u64>()) {
        let a = permuted_docs(k.clone(), k.len());
        let mut b = a.clone();
        b.sort();
        prop_assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        let rev: Vec<String> = a.iter().rev().cloned().collect();
        prop_assert_eq!(kendall_tau(&a, &rev).unwrap(), -1.0);
        let tau = kendall_tau(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&tau));
        prop_assert_eq!(tau, kendall_tau(&b, &a).unwrap());
        let rename = |s: &String| format!("x{}-{s}", relabel % 97);
        let a2: Vec<String> = a.iter().map(rename).collect();
        let b2: Vec<String> = b.iter().map(rename).collect();
        prop_assert_eq!(tau, kendall_tau(&a2, &b2).unwrap());
    }

    #[test]
    fn mask_variant_count(tokens in prop::collection::vec("[a-z]{1,6}", 0..30), cap in 1usize..20, seed in any::<u64>()) {
        let q = Query::new("q", if tokens.is_empty() { "x".to_string() } else { tokens.join(" ") });
        let n = q.text.split_whitespace().count();
        let variants = mask_variants(&q, cap, seed);
        prop_assert_eq!(variants.len(), if n >= 2 { n.min(cap) } else { 0 });
        prop_assert_eq!(&variants, &mask_variants(&q, cap, seed));
        for v in &variants {
            let mut t: Vec<&str> = q.text.split_whitespace().collect();
            t.remove(v.dropped_term_index);
            prop_assert_eq!(v.text.clone(), t.join(" "));
        }
    }

    #[test]
    fn alteration_is_shift_invariant_and_scale_free(
        rows in prop::collection::vec(prop::collection::vec(0.1f64..5.0, 6), 1..6),
        orig in prop::collection::vec(0.5f64..5.0, 6),
        shift in -3.0f64..3.0,
        c in 0.1f64..10.0,
    ) {
        let topk: Vec<RunEntry> = descending(orig).into_iter().enumerate()
            .map(|(i, s)| RunEntry { doc_id: format!("d{i}"), score: s, rank: i as u32 + 1 }).collect();
        let base = alteration_query_value(&topk, &rows).unwrap().unwrap();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect();
        prop_assert!((alteration_query_value(&topk, &shifted).unwrap().unwrap() - base).abs() < 1e-9);
        let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        let scaled_topk: Vec<RunEntry> = topk.iter().map(|e| RunEntry { score: e.score * c, ..e.clone() }).collect();
        let scaled = alteration_query_value(&scaled_topk, &scaled_rows).unwrap().unwrap();
        prop_assert!((scaled - base).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn larmor_depends_only_on_source_ranks(positions in prop::collection::vec(0usize..15, 1..10), f in 0.01f64..100.0) {
        let pqs: Vec<PseudoQuery> = positions.iter().enumerate().map(|(i, _)| PseudoQuery {
            id: format!("pq{i}"), source_doc_id: format!("src{i}"), text: "t".into(),
        }).collect();
        let build = |score: &dyn Fn(usize) -> f64| {
            let mut run = Run::new("m");
            for (i, &p) in positions.iter().enumerate() {
                let entries = (0..15).map(|r| RunEntry {
                    doc_id: if r == p { format!("src{i}") } else { format!("x{r}") },
                    score: score(r),
                    rank: r as u32 + 1,
                }).collect();
                run.queries.insert(format!("pq{i}"), entries);
            }
            run
        };
        let a = larmor_score("m", &pqs, &build(&|r| 100.0 - r as f64)).unwrap().value;
        let b = larmor_score("m", &pqs, &build(&|r| f / (r + 1) as f64)).unwrap().value;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stub_encoding_is_batch_invariant_and_unit(texts in prop::collection::vec("[a-zA-Z ]{0,40}", 1..20), dim in 1usize..64, asym in any::<bool>()) {
        let record = ModelRecord { asymmetric: asym, ..ModelRecord::stub("stub-x", dim, Similarity::Cosine) };
        for mode in [EncodeMode::Query, EncodeMode::Document] {
            let batch = encode(&StubEncoder, &record, mode, &texts).unwrap();
            let singles: Vec<Vec<f32>> = texts.iter()
                .flat_map(|t| encode(&StubEncoder, &record, mode, std::slice::from_ref(t)).unwrap())
                .collect();
            prop_assert_eq!(&batch, &singles);
            for v in &batch {
                let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn leaderboard_ignores_insertion_order(vals in prop::collection::vec(prop::option::of(0.0f64..1.0), 1..10)) {
        let records: Vec<ModelRecord> = vals.iter().enumerate().map(|(i, v)| ModelRecord {
            msmarco_ndcg10: v.map(|x| (x * 10.0).round() / 10.0),
            ..ModelRecord::stub(format!("m{i}"), 8, Similarity::Dot)
        }).collect();
        let forward = Registry::new(records.clone()).unwrap();
        let backward = Registry::new(records.into_iter().rev()).unwrap();
        prop_assert_eq!(
            leaderboard_rank(&forward, LeaderboardField::MsmarcoNdcg10).unwrap(),
            leaderboard_rank(&backward, LeaderboardField::MsmarcoNdcg10).unwrap()
        );
    }
}
