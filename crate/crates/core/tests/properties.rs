mod common;

use std::sync::Arc;

use milcap::attnsel::{AttnSelector, ScoreKind};
use milcap::bagio::{decode, encode, BagRecord};
use milcap::dec::{clustering_loss, dec_fit, hard_assignments, soft_assign, target_distribution, DecConfig};
use milcap::gat::{GatConfig, GatStack};
use milcap::graph::{build_edges, cosine_similarity_matrix, EdgeMode};
use milcap::heads::{bce_loss, CaptionConfig, CaptionModel, Vocabulary};
use milcap::metrics::{auc, bleu, rouge_l};
use milcap::numerics::{Matrix, ParamStore, SeedStream, Tape};
use proptest::prelude::*;

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(lo..hi, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

/// Row-stochastic matrix with strictly positive entries.
fn stochastic(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.01f64..1.0, rows * cols).prop_map(move |d| {
        let m = Matrix::new(rows, cols, d).unwrap();
        let mut out = Vec::new();
        for r in m.row_iter() {
            let s: f64 = r.iter().sum();
            out.extend(r.iter().map(|v| v / s));
        }
        Matrix::new(rows, cols, out).unwrap()
    })
}

fn row_sums_are_one(m: &Matrix, tol: f64) -> bool {
    m.row_iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_and_t_rows_sum_to_one(e in matrix(1..12, 1..5, -5.0, 5.0), k in 1usize..5, seed in 0u64..1000) {
        let mu = common::uniform_matrix(k, e.cols(), -5.0, 5.0, seed);
        let q = soft_assign(&e, &mu, 1.0).unwrap();
        prop_assert!(row_sums_are_one(&q, 1e-9));
        prop_assert!(row_sums_are_one(&target_distribution(&q), 1e-9));
        prop_assert!(q.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_at_equality(t in stochastic(6, 3), q in stochastic(6, 3)) {
        prop_assert!(clustering_loss(&t, &q).unwrap() >= 0.0);
        prop_assert!(clustering_loss(&q, &q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn scaled_cluster_mass_follows_target_formula(q in stochastic(5, 3), c in 0.1f64..10.0, col in 0usize..3) {
        let scaled = Matrix::from_fn(5, 3, |i, k| if k == col { q.get(i, k) * c } else { q.get(i, k) }).unwrap();
        let t = target_distribution(&scaled);
        let f: Vec<f64> = (0..3).map(|k| (0..5).map(|i| scaled.get(i, k)).sum()).collect();
        for i in 0..5 {
            let w: Vec<f64> = (0..3).map(|k| scaled.get(i, k).powi(2) / f[k]).collect();
            let z: f64 = w.iter().sum();
            for k in 0..3 {
                prop_assert!((t.get(i, k) - w[k] / z).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hard_assignments_follow_row_permutations(seed in 0u64..500) {
        let (e, _) = common::blobs(4, 3, 6.0, 1.0, seed);
        let perm = common::permutation(e.rows(), seed + 1);
        let cfg = DecConfig { k: 3, ..DecConfig::default() };
        let a = dec_fit(&e, &cfg).unwrap().assignments;
        let b = dec_fit(&e.select_rows(&perm), &cfg).unwrap().assignments;
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b[i], a[p]);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix(1..6, 1..7, -30.0, 30.0)) {
        let tape = Tape::new();
        let s = tape.leaf(x.clone()).softmax_rows().value();
        prop_assert!(row_sums_are_one(&s, 1e-12));
    }

    #[test]
    fn masked_softmax_is_zero_off_mask(x in matrix(3..4, 4..5, -5.0, 5.0), bits in prop::collection::vec(any::<bool>(), 12)) {
        let mut mask = bits;
        for r in 0..3 {
            mask[r * 4 + r] = true;
        }
        let tape = Tape::new();
        let s = tape.leaf(x).masked_softmax_rows(Arc::new(mask.clone())).unwrap().value();
        prop_assert!(row_sums_are_one(&s, 1e-12));
        for (v, keep) in s.data().iter().zip(&mask) {
            prop_assert!(*keep || *v == 0.0);
        }
    }

    #[test]
    fn cosine_is_symmetric_with_unit_diagonal(r in matrix(1..7, 1..6, 0.1, 3.0)) {
        let s = cosine_similarity_matrix(&r).unwrap();
        for i in 0..r.rows() {
            prop_assert_eq!(s.get(i, i), 1.0);
            for j in 0..r.rows() {
                prop_assert_eq!(s.get(i, j), s.get(j, i));
                prop_assert!((-1.0..=1.0).contains(&s.get(i, j)));
            }
        }
    }

    #[test]
    fn edges_are_symmetric_with_self_loops(r in matrix(1..9, 2..5, -1.0, 1.0), m in 1usize..4, seed in any::<u64>(), train in any::<bool>()) {
        prop_assume!(r.row_iter().all(|row| row.iter().any(|v| v.abs() > 1e-6)));
        let s = cosine_similarity_matrix(&r).unwrap();
        let mode = if train { EdgeMode::Train { seed, tau: 1.0 } } else { EdgeMode::Eval };
        let adj = build_edges(&s, mode, m, true).unwrap();
        prop_assert!(adj.is_symmetric());
        let n = r.rows();
        for i in 0..n {
            prop_assert!(adj.has_edge(i, i));
            prop_assert!(adj.neighbors(i).len() >= (m + 1).min(n));
        }
    }

    #[test]
    fn gat_attention_rows_sum_to_one(x in matrix(2..6, 3..4, -1.0, 1.0), seed in 0u64..100) {
        let n = x.rows();
        let s = cosine_similarity_matrix(&x).unwrap();
        let adj = build_edges(&s, EdgeMode::Eval, 1, true).unwrap();
        let mut store = ParamStore::new();
        let cfg = GatConfig { layers: 2, d_out: 4, ..GatConfig::default() };
        let gat = GatStack::register(&mut store, "gat", 3, cfg, &mut SeedStream::new(seed).rng()).unwrap();
        let tape = Tape::new();
        let out = gat.forward(&store.bind(&tape), tape.leaf(x), &adj, None).unwrap();
        for beta in &out.betas {
            let b = beta.value();
            prop_assert!(row_sums_are_one(&b, 1e-12));
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(adj.has_edge(i, j) || b.get(i, j) == 0.0);
                }
            }
        }
    }

    #[test]
    fn one_representative_per_nonempty_cluster(e in matrix(1..10, 2..4, -1.0, 1.0), k in 1usize..4, seed in 0u64..100) {
        let assignments: Vec<usize> = (0..e.rows()).map(|i| (i * 7 + seed as usize) % k).collect();
        let mut store = ParamStore::new();
        let sel = AttnSelector::register(&mut store, "sel", e.cols(), ScoreKind::SelfDot, &mut SeedStream::new(seed).rng()).unwrap();
        let picked = sel.select(&store, &e, &assignments, k).unwrap();
        let nonempty = (0..k).filter(|c| assignments.contains(c)).count();
        prop_assert_eq!(picked.clusters.len(), nonempty);
        for c in &picked.clusters {
            prop_assert_eq!(assignments[c.representative], c.cluster);
            prop_assert!((c.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bagemb_round_trips_bit_exactly(
        n in 1usize..20,
        d in 1usize..10,
        raw in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 200),
        label in prop::option::of(any::<bool>()),
        caption in prop::option::of("[a-z ]{0,40}"),
        id in "[A-Za-z0-9_-]{0,24}",
    ) {
        let data: Vec<f64> = (0..n * d).map(|i| f64::from(raw[i % raw.len()])).collect();
        let bag = BagRecord::new(id, Matrix::new(n, d, data).unwrap(), label, caption).unwrap();
        let bytes = encode(&bag).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &bag);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..80)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn vocabulary_round_trips_known_text(words in prop::collection::vec("[a-z]{1,6}", 1..10)) {
        let text = words.join(" ");
        let vocab = Vocabulary::build([text.as_str()]);
        prop_assert_eq!(vocab.decode(&vocab.encode(&text).unwrap()), text);
    }

    #[test]
    fn bleu_ignores_reference_order(c in "[abc]( [abc]){0,7}", r1 in "[abc]( [abc]){0,7}", r2 in "[abcd]( [abcd]){0,7}") {
        let t = |s: &str| s.split(' ').map(str::to_owned).collect::<Vec<_>>();
        let a = bleu(&t(&c), &[t(&r1), t(&r2)], 4);
        let b = bleu(&t(&c), &[t(&r2), t(&r1)], 4);
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&rouge_l(&t(&c), &t(&r1))));
    }

    #[test]
    fn auc_matches_pair_counting(scores in prop::collection::vec(0u8..10, 2..30), labels in prop::collection::vec(any::<bool>(), 30)) {
        let s: Vec<f64> = scores.iter().map(|&v| f64::from(v) / 10.0).collect();
        let y = &labels[..s.len()];
        prop_assume!(y.iter().any(|&l| l) && y.iter().any(|&l| !l));
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    pairs += 1.0;
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((auc(&s, y).unwrap() - wins / pairs).abs() <= 1e-12);
        // strictly monotone rescaling keeps the ranking
        let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp()).collect();
        prop_assert!((auc(&warped, y).unwrap() - wins / pairs).abs() <= 1e-12);
    }

    #[test]
    fn bce_is_nonnegative(p in prop::collection::vec(1e-6f64..(1.0 - 1e-6), 1..10), y in prop::collection::vec(any::<bool>(), 10)) {
        prop_assert!(bce_loss(&p, &y[..p.len()]).unwrap() >= 0.0);
    }

    #[test]
    fn hard_assignment_is_row_argmax(q in stochastic(7, 4)) {
        for (i, &a) in hard_assignments(&q).iter().enumerate() {
            let row = q.row(i);
            prop_assert!(row.iter().all(|&v| v <= row[a]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn later_tokens_never_change_earlier_logits(
        tokens in prop::collection::vec(4usize..9, 2..7),
        cut in 0usize..6,
        replacement in 4usize..9,
        seed in 0u64..50,
    ) {
        let cut = cut % tokens.len();
        let mut store = ParamStore::new();
        let cfg = CaptionConfig { d_model: 8, heads: 2, max_len: 8 };
        let model = CaptionModel::register(&mut store, "cap", 3, 9, cfg, &mut SeedStream::new(seed).rng()).unwrap();
        let prefix = common::uniform_matrix(1, 8, -1.0, 1.0, seed);
        let mut changed = tokens.clone();
        for t in changed.iter_mut().skip(cut + 1) {
            *t = replacement;
        }
        let logits = |toks: &[usize]| {
            let tape = Tape::new();
            model.logits(&store.bind(&tape), tape.leaf(prefix.clone()), toks).unwrap().value().as_ref().clone()
        };
        let (a, b) = (logits(&tokens), logits(&changed));
        // row p sees [prefix, BOS, tokens[..p-1]]; rows up to cut+1 exclude the changed tokens
        for row in 0..=cut + 1 {
            prop_assert_eq!(a.row(row), b.row(row));
        }
    }
}
