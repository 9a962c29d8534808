mod common;

use common::{permutation, synthetic_dataset, tiny_config};
use milcap::bagio::{Dataset, DatasetBag, Split, SyntheticSpec};
use milcap::error::Error;
use milcap::heads::Task;
use milcap::metrics::classification_metrics;
use milcap::trainer::{
    evaluate, predict_split, report_from_predictions, train, AvgPoolBaseline, Checkpoint, Pipeline, TrainConfig,
    Trainer,
};

fn spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        region_count: 3,
        copies_per_region: 3,
        d_v: 6,
        positive_region_prob: 0.3,
        seed,
        ..SyntheticSpec::default()
    }
}

fn quick(task: Task) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 4,
        ..tiny_config(task, 9)
    }
}

#[test]
fn same_seed_gives_bitwise_identical_logs() {
    let data = synthetic_dataset(&spec(1), 12, 4);
    let (ck_a, log_a) = train(&data, quick(Task::Classify)).unwrap();
    let (ck_b, log_b) = train(&data, quick(Task::Classify)).unwrap();
    let lines = |l: &[milcap::trainer::EpochLog]| l.iter().map(|e| e.to_json_line()).collect::<Vec<_>>();
    assert_eq!(lines(&log_a), lines(&log_b));
    assert_eq!(ck_a.to_bytes().unwrap(), ck_b.to_bytes().unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let data = synthetic_dataset(&spec(2), 10, 2);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&data, quick(Task::Classify)).unwrap().1)
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn logged_total_is_the_weighted_sum() {
    let data = synthetic_dataset(&spec(3), 8, 2);
    let cfg = TrainConfig {
        lambda_clu: 0.37,
        ..quick(Task::Classify)
    };
    for e in train(&data, cfg).unwrap().1 {
        assert_eq!(e.total_loss, e.task_loss + 0.37 * e.clu_loss);
        assert!(e.clu_loss >= 0.0);
    }
}

#[test]
fn head_only_training_reduces_loss() {
    let data = synthetic_dataset(&spec(4), 16, 2);
    let cfg = TrainConfig {
        lambda_clu: 0.0,
        frozen: vec!["sel.".into(), "gat.".into()],
        epochs: 25,
        lr: 1e-2,
        ..quick(Task::Classify)
    };
    let (ck, log) = train(&data, cfg).unwrap();
    assert!(log.last().unwrap().task_loss < log[0].task_loss, "{log:?}");
    let start = Pipeline::new(ck.config.clone(), ck.d_v, None).unwrap();
    let end = ck.to_pipeline().unwrap();
    for ((name, a), (_, b)) in start.store.iter().zip(end.store.iter()) {
        assert_eq!(a == b, !name.starts_with("head."), "{name}");
    }
}

#[test]
fn checkpoint_save_load_save_is_identical() {
    let data = synthetic_dataset(&spec(5), 6, 2);
    let (ck, _) = train(&data, TrainConfig { epochs: 1, ..quick(Task::Classify) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ck");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_bytes().unwrap(), std::fs::read(&path).unwrap());
    assert_eq!(loaded, ck);
    let a = evaluate(&data, &ck, Split::Test).unwrap();
    let b = evaluate(&data, &loaded, Split::Test).unwrap();
    assert_eq!(a, b);
}

#[test]
fn caption_checkpoint_carries_its_vocabulary() {
    let data = synthetic_dataset(&SyntheticSpec { with_caption: true, ..spec(6) }, 6, 2);
    let (ck, _) = train(&data, TrainConfig { epochs: 1, ..quick(Task::Caption) }).unwrap();
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back.vocab, ck.vocab);
    assert!(back.vocab.is_some());
    let report = evaluate(&data, &back, Split::Test).unwrap();
    assert!(report.caption.is_some());
}

#[test]
fn report_matches_recomputation_from_predictions() {
    let data = synthetic_dataset(&SyntheticSpec { positive_region_prob: 0.2, ..spec(7) }, 8, 10);
    let (ck, _) = train(&data, quick(Task::Classify)).unwrap();
    let pipeline = ck.to_pipeline().unwrap();
    let preds = predict_split(&pipeline, &data, Split::Test).unwrap();
    let (scores, labels): (Vec<f64>, Vec<bool>) = preds.iter().map(|p| (p.score.unwrap(), p.label.unwrap())).unzip();
    let direct = classification_metrics(&scores, &labels, 0.5).unwrap();
    let report = report_from_predictions(Task::Classify, &preds).unwrap();
    assert_eq!(report.classification.unwrap(), direct);
    assert_eq!(evaluate(&data, &ck, Split::Test).unwrap(), evaluate(&data, &ck, Split::Test).unwrap());
}

#[test]
fn empty_split_is_an_error() {
    let data = synthetic_dataset(&spec(8), 6, 0);
    let (ck, _) = train(&data, TrainConfig { epochs: 1, ..quick(Task::Classify) }).unwrap();
    assert!(matches!(evaluate(&data, &ck, Split::Test), Err(Error::Data(_))));
}

#[test]
fn unsupervised_bags_are_skipped_and_all_skipped_fails() {
    let data = synthetic_dataset(&spec(9), 6, 0);
    let mut bags: Vec<DatasetBag> = data.bags().to_vec();
    bags[0].record.label = None;
    let partial = Dataset::new(bags.clone()).unwrap();
    assert!(Trainer::new(&partial, quick(Task::Classify)).is_ok());
    for b in &mut bags {
        b.record.label = None;
    }
    let none = Dataset::new(bags).unwrap();
    assert!(matches!(Trainer::new(&none, quick(Task::Classify)), Err(Error::Data(_))));
    // no captions at all
    assert!(matches!(Trainer::new(&data, quick(Task::Caption)), Err(Error::Data(_))));
}

#[test]
fn validation_split_adds_metrics_to_the_log() {
    let data = synthetic_dataset(&SyntheticSpec { positive_region_prob: 0.2, ..spec(10) }, 8, 8);
    let bags = data
        .bags()
        .iter()
        .cloned()
        .map(|mut b| {
            if b.split == Split::Test {
                b.split = Split::Val;
            }
            b
        })
        .collect();
    let data = Dataset::new(bags).unwrap();
    let (_, log) = train(&data, TrainConfig { epochs: 2, ..quick(Task::Classify) }).unwrap();
    assert!(log.iter().all(|e| e.metrics.as_ref().is_some_and(|m| m.classification.is_some())));
}

#[test]
fn eval_prediction_ignores_patch_order() {
    let data = synthetic_dataset(&spec(11), 4, 4);
    let (ck, _) = train(&data, TrainConfig { epochs: 1, ..quick(Task::Classify) }).unwrap();
    let p = ck.to_pipeline().unwrap();
    for record in data.records() {
        let base = p.predict(&record.embeddings).unwrap();
        let h = p.bag_embedding(&record.embeddings).unwrap();
        for s in 0..3 {
            let shuffled = record.permuted(&permutation(record.len(), s));
            assert!((p.predict(&shuffled.embeddings).unwrap() - base).abs() <= 1e-9);
            assert!(p.bag_embedding(&shuffled.embeddings).unwrap().max_abs_diff(&h) <= 1e-9);
        }
    }
}

#[test]
fn pairwise_scoring_trains_end_to_end() {
    let data = synthetic_dataset(&spec(12), 6, 2);
    let cfg = TrainConfig {
        score_kind: milcap::attnsel::ScoreKind::Pairwise,
        epochs: 1,
        ..quick(Task::Classify)
    };
    let (ck, log) = train(&data, cfg).unwrap();
    assert!(log[0].task_loss.is_finite());
    assert!(evaluate(&data, &ck, Split::Test).is_ok());
}

#[test]
fn baseline_trains_with_the_same_budget() {
    let data = synthetic_dataset(&SyntheticSpec { positive_region_prob: 0.2, ..spec(13) }, 12, 8);
    let cfg = quick(Task::Classify);
    let (model, log) = AvgPoolBaseline::train(&data, &cfg).unwrap();
    assert_eq!(log.len(), cfg.epochs);
    let report = model.evaluate(&data, Split::Test).unwrap();
    assert!(report.classification.is_some());
}
