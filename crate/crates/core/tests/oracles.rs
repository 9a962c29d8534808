//! Library results against independent scalar re-evaluations.

mod common;

use common::hand::{self, toks, PAIRS};
use common::scalar::{q_scalar, t_scalar};
use common::{normal_matrix, uniform_matrix};
use milcap::attnsel::{AttnSelector, ScoreKind};
use milcap::bagio::{generate_bag, SyntheticSpec};
use milcap::dec::{clustering_loss, init_centroids, soft_assign, target_distribution};
use milcap::gat::{GatConfig, GatStack};
use milcap::graph::{build_edges, cosine_similarity_matrix, Adjacency, EdgeMode};
use milcap::heads::{bce_loss, CaptionConfig, CaptionModel, DecodeMode, Vocabulary};
use milcap::metrics::{auc, bleu, cider, modified_precisions, rouge_l};
use milcap::numerics::{Matrix, ParamStore, SeedStream, Tape};
use milcap::trainer::{Adam, AdamConfig};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn matmul_matches_triple_loop() {
    for s in 0..5 {
        let a = uniform_matrix(5, 7, -1.0, 1.0, s);
        let b = uniform_matrix(7, 3, -1.0, 1.0, s + 1);
        let c = a.matmul(&b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert!(close(c.get(i, j), acc, 1e-12));
            }
        }
    }
}

#[test]
fn softmax_of_one_two_three() {
    let s = Matrix::row_vector(&[1.0, 2.0, 3.0]).unwrap().softmax_rows();
    let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
    for (i, v) in s.data().iter().enumerate() {
        assert!(close(*v, ((i + 1) as f64).exp() / z, 1e-12));
    }
}

// ---- clustering ----

#[test]
fn soft_assign_and_target_match_scalar_oracle() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-2.0, 1.0], vec![3.0, -1.0]];
    let mus = vec![vec![0.5, 0.0], vec![-1.0, 2.0]];
    let q = soft_assign(&Matrix::from_rows(&pts).unwrap(), &Matrix::from_rows(&mus).unwrap(), 1.0).unwrap();
    let qs: Vec<Vec<f64>> = pts.iter().map(|p| q_scalar(p, &mus, 1.0)).collect();
    let t = target_distribution(&q);
    let ts = t_scalar(&qs);
    for i in 0..4 {
        for k in 0..2 {
            assert!(close(q.get(i, k), qs[i][k], 1e-12));
            assert!(close(t.get(i, k), ts[i][k], 1e-12));
        }
    }
}

#[test]
fn target_of_fixed_q() {
    let rows = vec![vec![0.9, 0.1], vec![0.6, 0.4]];
    let t = target_distribution(&Matrix::from_rows(&rows).unwrap());
    let ts = t_scalar(&rows);
    for i in 0..2 {
        for k in 0..2 {
            assert!(close(t.get(i, k), ts[i][k], 1e-12));
        }
    }
}

#[test]
fn kl_against_nearly_one_hot_target() {
    let d = 1e-12;
    let t = Matrix::row_vector(&[1.0, d]).unwrap();
    let q = Matrix::row_vector(&[0.5, 0.5]).unwrap();
    let want = (1.0f64 / 0.5).ln() + d * (d / 0.5).ln();
    assert!(close(clustering_loss(&t, &q).unwrap(), want, 1e-12));
    assert!(close(want, 2f64.ln(), 1e-10));
}

#[test]
fn farthest_point_seeds_land_in_both_blobs() {
    let (e, labels) = common::blobs(10, 2, 50.0, 1.0, 8);
    // keep only the first two blobs
    let two = e.select_rows(&(0..20).collect::<Vec<_>>());
    let init = init_centroids(&two, 2).unwrap();
    let mut seen = Vec::new();
    for c in 0..2 {
        let idx = (0..20).find(|&i| two.row(i) == init.centroids.row(c)).unwrap();
        seen.push(labels[idx]);
    }
    seen.sort();
    assert_eq!(seen, vec![0, 1]);
}

#[test]
fn synthetic_patches_sit_nearest_their_region() {
    let spec = SyntheticSpec {
        region_separation: 10.0,
        noise_sigma: 0.1,
        seed: 12,
        ..SyntheticSpec::default()
    };
    let bag = generate_bag(&spec).unwrap();
    let c = &bag.truth.region_centroids;
    for (i, &region) in bag.truth.region_of_patch.iter().enumerate() {
        let x = bag.record.embeddings.row(i);
        let nearest = (0..c.rows())
            .min_by(|&a, &b| {
                let da: f64 = x.iter().zip(c.row(a)).map(|(p, q)| (p - q).powi(2)).sum();
                let db: f64 = x.iter().zip(c.row(b)).map(|(p, q)| (p - q).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(nearest, region, "patch {i}");
    }
}

// ---- selection ----

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vec_mat(x: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols()).map(|j| (0..m.rows()).map(|i| x[i] * m.get(i, j)).sum()).collect()
}

#[test]
fn selector_scores_match_scalar_oracle() {
    for s in 0..5 {
        let d = 4;
        let mut store = ParamStore::new();
        let sel = AttnSelector::register(&mut store, "sel", d, ScoreKind::SelfDot, &mut SeedStream::new(s).rng()).unwrap();
        let z = uniform_matrix(3, d, -1.0, 1.0, s + 40);
        let (wq, wk, wv) = (store.get(sel.w_q), store.get(sel.w_k), store.get(sel.w_v));
        let e: Vec<f64> = (0..3)
            .map(|i| dot(&vec_mat(z.row(i), wq), &vec_mat(z.row(i), wk)) / (d as f64).sqrt())
            .collect();
        let zsum: f64 = e.iter().map(|v| v.exp()).sum();
        let alpha: Vec<f64> = e.iter().map(|v| v.exp() / zsum).collect();
        let score: Vec<f64> = (0..3).map(|i| alpha[i] * vec_mat(z.row(i), wv).iter().sum::<f64>()).collect();

        let tape = Tape::new();
        let out = sel.score_cluster(&store.bind(&tape), tape.leaf(z.clone())).unwrap();
        for i in 0..3 {
            assert!(close(out.e.value().data()[i], e[i], 1e-12));
            assert!(close(out.alpha.value().data()[i], alpha[i], 1e-12));
            assert!(close(out.score.value().data()[i], score[i], 1e-12));
        }
    }
}

// ---- graph ----

#[test]
fn cosine_matches_scalar_oracle() {
    let r = uniform_matrix(4, 6, -1.0, 1.0, 3);
    let s = cosine_similarity_matrix(&r).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let (a, b) = (r.row(i), r.row(j));
            let want = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
            assert!(close(s.get(i, j), want, 1e-12), "({i},{j})");
        }
    }
}

#[test]
fn near_zero_temperature_recovers_eval_edges() {
    for s in 0..20 {
        let r = normal_matrix(6, 5, 1.0, s);
        let sim = cosine_similarity_matrix(&r).unwrap();
        let eval = build_edges(&sim, EdgeMode::Eval, 1, true).unwrap();
        let train = build_edges(&sim, EdgeMode::Train { seed: s, tau: 1e-6 }, 1, true).unwrap();
        assert_eq!(eval.edges(), train.edges(), "seed {s}");
    }
}

// ---- graph attention ----

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

#[test]
fn gat_layer_matches_scalar_oracle() {
    let n = 4;
    let mask = vec![
        true, true, false, true, //
        true, true, true, false, //
        false, true, true, false, //
        true, false, false, true,
    ];
    let adj = Adjacency::from_mask(n, mask.clone()).unwrap();
    for s in 0..5 {
        let mut store = ParamStore::new();
        let config = GatConfig {
            layers: 1,
            d_out: 3,
            ..GatConfig::default()
        };
        let gat = GatStack::register(&mut store, "gat", 2, config, &mut SeedStream::new(s).rng()).unwrap();
        let h = uniform_matrix(n, 2, -1.0, 1.0, s + 1);
        let w = store.get(gat.layers[0].w);
        let a = store.get(gat.layers[0].a).data();
        let wh: Vec<Vec<f64>> = (0..n).map(|u| vec_mat(h.row(u), w)).collect();
        let mut beta = vec![vec![0.0; n]; n];
        for v in 0..n {
            let nb: Vec<usize> = (0..n).filter(|&u| mask[v * n + u]).collect();
            let logit = |u: usize| leaky(dot(&a[..3], &wh[v]) + dot(&a[3..], &wh[u]));
            let z: f64 = nb.iter().map(|&u| logit(u).exp()).sum();
            for &u in &nb {
                beta[v][u] = logit(u).exp() / z;
            }
        }
        let tape = Tape::new();
        let out = gat.layer(&store.bind(&tape), 0, tape.leaf(h.clone()), &adj, None).unwrap();
        for v in 0..n {
            for u in 0..n {
                assert!(close(out.beta.value().get(v, u), beta[v][u], 1e-12));
            }
            for c in 0..3 {
                let want = leaky((0..n).map(|u| beta[v][u] * wh[u][c]).sum());
                assert!(close(out.h.value().get(v, c), want, 1e-12));
            }
        }
    }
}

// ---- heads ----

#[test]
fn bce_matches_scalar_oracle() {
    let preds: [f64; 5] = [0.3, 0.99, 0.02, 0.5, 0.72];
    let labels = [true, true, false, false, true];
    let want: f64 = preds
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| {
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / 5.0;
    assert!(close(bce_loss(&preds, &labels).unwrap(), want, 1e-12));
}

#[test]
fn degenerate_caption_task_fits_quickly() {
    let vocab = Vocabulary::build(["tumor tumor"]);
    let caption = vocab.encode("tumor tumor tumor").unwrap();
    let config = CaptionConfig { d_model: 8, heads: 2, max_len: 4 };
    let mut store = ParamStore::new();
    let model = CaptionModel::register(&mut store, "cap", 3, vocab.len(), config, &mut SeedStream::new(1).rng()).unwrap();
    let mut adam = Adam::for_store(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, &store);
    let h = uniform_matrix(1, 3, -1.0, 1.0, 2);
    let trainable = vec![true; store.len()];
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let tape = Tape::new();
        let b = store.bind(&tape);
        let prefix = model.project_prefix(&b, tape.leaf(h.clone())).unwrap();
        let nll = model.position_nll(&b, prefix, &caption).unwrap();
        last = nll.value().data().iter().copied().fold(0.0, f64::max);
        let grads = b.gradients(&tape.backward(nll.sum()).unwrap());
        adam.step(&mut store, &grads, &trainable).unwrap();
    }
    assert!(last <= 2f64.ln(), "worst per-position NLL {last}");
    let prefix = h.matmul(store.get(model.w_c)).unwrap();
    let a = model.generate(&store, &prefix, 4, DecodeMode::Greedy).unwrap();
    assert_eq!(a, model.generate(&store, &prefix, 4, DecodeMode::Greedy).unwrap());
}

// ---- metrics ----

#[test]
fn auc_worked_example() {
    let a = auc(&[0.9, 0.8, 0.4, 0.3], &[true, false, true, false]).unwrap();
    assert!(close(a, 0.75, 1e-12));
}

/// Hand tables: clipped matches over candidate n-gram totals, n = 1..4.
#[test]
fn ngram_tables_for_fixed_pairs() {
    let floor = milcap::metrics::BLEU_SMOOTHING;
    let cases: [(&str, &str, [f64; 4]); 3] = [
        ("the cat sat", "the cat sat down", [1.0, 1.0, 1.0, floor]),
        ("a small gland with atypia", "a gland with small atypia", [1.0, 0.25, floor, floor]),
        ("benign mucosa", "benign regular mucosa", [1.0, floor, floor, floor]),
    ];
    for (c, r, want) in cases {
        assert_eq!(modified_precisions(&toks(c), &[toks(r)], 4), want.to_vec(), "{c}");
    }
}

#[test]
fn bleu_rouge_cider_hand_values() {
    for (i, (c, r)) in PAIRS.iter().enumerate() {
        for n in 1..=4 {
            let b = bleu(&toks(c), &[toks(r)], n);
            assert!(close(b, hand::BLEU[i][n - 1], 1e-12), "pair {i} BLEU@{n}: {b}");
        }
        assert!(close(rouge_l(&toks(c), &toks(r)), hand::ROUGE_L[i], 1e-12));
    }
    let cands: Vec<Vec<&str>> = PAIRS.iter().map(|p| toks(p.0)).collect();
    let refs: Vec<Vec<Vec<&str>>> = PAIRS.iter().map(|p| vec![toks(p.1)]).collect();
    let (mean, per) = cider(&cands, &refs);
    for i in 0..3 {
        assert!(close(per[i], hand::CIDER[i], 1e-12), "pair {i} CIDEr {}", per[i]);
    }
    assert!(close(mean, hand::CIDER_MEAN, 1e-12));
}

// ---- optimizer ----

#[test]
fn adam_on_square_matches_scalar_recurrence() {
    let cfg = AdamConfig {
        lr: 0.1,
        weight_decay: 0.01,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(cfg, &[(1, 1)]);
    let mut x = Matrix::scalar(1.0);
    let (mut xs, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=10 {
        let g = 2.0 * xs;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t));
        let vh = v / (1.0 - cfg.beta2.powi(t));
        xs -= cfg.lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * xs);

        let grad = Matrix::scalar(2.0 * x.item().unwrap());
        adam.step_one(0, &mut x, &grad, "x").unwrap();
        assert!(close(x.item().unwrap(), xs, 1e-15), "step {t}");
    }
}
